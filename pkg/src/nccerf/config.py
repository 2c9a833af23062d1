"""Flat INI-style configuration files for :class:`ModelConfig`.

A file has a single ``[model]`` section whose keys are the ModelConfig,
PriorSpec and grid field names, e.g.::

    [model]
    K = 20
    iterations = 4000
    V0_y = 100
    levels = 0.5, 0.8, 0.9, 0.95

Vector/matrix prior values are comma-separated; a matrix is given row-major
with rows separated by ``;``.
"""

from __future__ import annotations

import configparser
from dataclasses import fields

import numpy as np

from .data import CerfGrid, ModelConfig, PriorSpec
from .errors import ConfigError

SECTION = "model"

_INT = {"K", "n_knots", "iterations", "burn_in", "thinning", "seed",
        "grid_points"}
_FLOAT = {"a0_y", "b0_y", "a0_w", "b0_w", "mu_eta", "tol", "max_fail_frac",
          "grid_lower", "grid_upper", "fixed_sigma_y"}
_ARRAY = {"m0_y", "V0_y", "m0_w", "V0_w"}
_BOOL = {"standardize"}
_TUPLE = {"levels", "grid_values"}
KEYS = _INT | _FLOAT | _ARRAY | _BOOL | _TUPLE


def _parse_array(text):
    rows = [r for r in text.split(";") if r.strip()]
    vals = [[float(v) for v in r.split(",") if v.strip()] for r in rows]
    if len(vals) == 1:
        return vals[0][0] if len(vals[0]) == 1 else tuple(vals[0])
    return tuple(tuple(r) for r in vals)


def _fmt_array(v):
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return repr(float(a))
    if a.ndim == 1:
        return ", ".join(repr(float(x)) for x in a)
    return "; ".join(", ".join(repr(float(x)) for x in row) for row in a)


def parse_value(key, text):
    text = text.strip()
    try:
        if key in _INT:
            return int(text)
        if key in _FLOAT:
            return None if text.lower() in ("", "none") else float(text)
        if key in _BOOL:
            low = text.lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(text)
            return low in ("true", "yes", "1", "on")
        if key in _ARRAY:
            return _parse_array(text)
        if key in _TUPLE:
            if text.lower() in ("", "none"):
                return None
            return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None
    raise ConfigError(f"unknown configuration key {key!r}")


def build_config(values: dict, base: ModelConfig = None) -> ModelConfig:
    """Apply flat ``key -> value`` overrides to ``base`` (or defaults)."""
    base = base or ModelConfig()
    unknown = set(values) - KEYS
    if unknown:
        raise ConfigError("unknown configuration key(s): "
                          + ", ".join(sorted(unknown)))
    prior_kw = {f.name: getattr(base.priors, f.name)
                for f in fields(PriorSpec)}
    prior_kw.update({k: v for k, v in values.items() if k in prior_kw})
    g = base.grid
    grid = CerfGrid(
        points=values.get("grid_points", g.points),
        lower=values.get("grid_lower", g.lower),
        upper=values.get("grid_upper", g.upper),
        values=values.get("grid_values", g.values))
    top = {f.name for f in fields(ModelConfig)} - {"priors", "grid"}
    kw = {k: v for k, v in values.items() if k in top}
    return base.with_(priors=PriorSpec(**prior_kw), grid=grid, **kw)


def load_config(path=None, overrides: dict = None) -> ModelConfig:
    values = {}
    if path is not None:
        cp = configparser.ConfigParser()
        cp.optionxform = str  # keys are case-sensitive (K, V0_y)
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not cp.has_section(SECTION):
            raise ConfigError(f"config {path} lacks a [{SECTION}] section")
        for key, text in cp.items(SECTION):
            if key not in KEYS:
                raise ConfigError(f"unknown configuration key {key!r}")
            values[key] = parse_value(key, text)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(values)


def config_items(cfg: ModelConfig) -> dict:
    """Flat ``key -> string`` view, the inverse of :func:`load_config`."""
    p, g = cfg.priors, cfg.grid
    items = {
        "K": cfg.K, "n_knots": cfg.n_knots, "iterations": cfg.iterations,
        "burn_in": cfg.burn_in, "thinning": cfg.thinning, "seed": cfg.seed,
        "standardize": str(cfg.standardize).lower(),
        "levels": ", ".join(repr(float(v)) for v in cfg.levels),
        "tol": repr(cfg.tol), "max_fail_frac": repr(cfg.max_fail_frac),
        "fixed_sigma_y": "none" if cfg.fixed_sigma_y is None else repr(
            cfg.fixed_sigma_y),
        "grid_points": g.points, "grid_lower": repr(g.lower),
        "grid_upper": repr(g.upper),
        "grid_values": "none" if g.values is None else ", ".join(
            repr(float(v)) for v in g.values),
        "m0_y": _fmt_array(p.m0_y), "V0_y": _fmt_array(p.V0_y),
        "a0_y": repr(p.a0_y), "b0_y": repr(p.b0_y),
        "m0_w": _fmt_array(p.m0_w), "V0_w": _fmt_array(p.V0_w),
        "a0_w": repr(p.a0_w), "b0_w": repr(p.b0_w), "mu_eta": repr(p.mu_eta),
    }
    return {k: str(v) for k, v in items.items()}


def dump_config(cfg: ModelConfig) -> str:
    lines = [f"[{SECTION}]"]
    lines += [f"{k} = {v}" for k, v in config_items(cfg).items()]
    return "\n".join(lines) + "\n"
