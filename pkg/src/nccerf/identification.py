"""From posterior draws to the causal exposure-response function.

Within component ``k`` the outcome regression on ``[1, x, z]`` is corrected
with the NCO regression of ``w`` on ``[1, x, z]``::

    effect_k    = theta_X,k - theta_Z,k * theta_WX / theta_WZ
    intercept_k = theta_0,k + theta_Z,k * E(z)
                  + theta_Z,k * (theta_WX / theta_WZ) * E(x)

and the curve is ``E[Y(x)] = sum_k w_k(x) * (effect_k * x + intercept_k)``.
Measured covariates enter each intercept at their sample means.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import IDENTITY, CerfEstimate, format_float
from .errors import IdentificationError, StorageError, ValidationError
from .psbp import stick_break

DEFAULT_LEVELS = (0.5, 0.8, 0.9, 0.95)


@dataclass(frozen=True)
class MomentCache:
    """Sample means on the analysis scale, keyed by design-column name."""

    means: dict

    @property
    def mean_x(self):
        return self.means["x"]

    @property
    def mean_z(self):
        return self.means["z"]


def _nc_ratio(theta_w, tol):
    theta_w = np.asarray(theta_w, dtype=float)
    twz = theta_w[..., 2]
    bad = np.abs(twz) <= tol
    if np.any(bad):
        raise IdentificationError(
            f"|theta_WZ| = {np.min(np.abs(twz)):.3g} <= tol={tol:g}: the NCO "
            "does not track the NCE (assumptions A6/A7 look violated)")
    return theta_w[..., 1] / twz


def component_effect(theta_y_k, theta_w, tol: float = 1e-6):
    """Confounding-corrected exposure slope of one (or many) components."""
    theta_y_k = np.asarray(theta_y_k, dtype=float)
    ratio = _nc_ratio(theta_w, tol)
    return theta_y_k[..., 1] - theta_y_k[..., 2] * ratio


def component_intercept(theta_y_k, theta_w, moments: MomentCache,
                        tol: float = 1e-6, extra=None):
    """Intercept of a component's causal line.

    ``extra`` lists ``(column index, mean)`` pairs for covariates that are
    averaged over.
    """
    theta_y_k = np.asarray(theta_y_k, dtype=float)
    ratio = _nc_ratio(theta_w, tol)
    tz = theta_y_k[..., 2]
    out = theta_y_k[..., 0] + tz * moments.mean_z + tz * ratio * moments.mean_x
    for j, mean in extra or ():
        out = out + theta_y_k[..., j] * mean
    return out


def _lines(theta_y, theta_w, mode, y_names, moments, tol):
    """Per-component ``(slope, intercept)`` on the analysis scale."""
    means = moments.means
    if mode == "bnp_nc":
        extra = [(j, means[nm]) for j, nm in enumerate(y_names) if j >= 3]
        slope = component_effect(theta_y, theta_w[..., None, :], tol)
        icpt = component_intercept(theta_y, theta_w[..., None, :], moments,
                                   tol, extra)
        return slope, icpt
    # baselines: the raw slope, other regressors held at their means
    icpt = theta_y[..., 0]
    for j, nm in enumerate(y_names):
        if j >= 2:
            icpt = icpt + theta_y[..., j] * means[nm]
    return theta_y[..., 1], icpt


def cerf_draw(state, grid, knots, moments, mode="bnp_nc", y_names=None,
              transforms=None, tol=1e-6):
    """CERF of a single parameter state at the exposure values ``grid``.

    ``grid`` is on the original exposure scale; ``transforms`` maps it to the
    analysis scale and the result back to original outcome units.
    """
    if not isinstance(moments, MomentCache):
        moments = MomentCache(dict(moments))
    transforms = transforms or {}
    tx = transforms.get("x", IDENTITY)
    ty = transforms.get("y", IDENTITY)
    y_names = y_names or ["1", "x", "z"]
    xs = tx.forward(np.asarray(grid, dtype=float))
    theta_w = None if state.theta_w is None else np.asarray(state.theta_w)
    slope, icpt = _lines(np.asarray(state.theta_y), theta_w, mode, y_names,
                         moments, tol)
    w = stick_break(knots.design(xs) @ np.asarray(state.eta)[:-1].T)
    vals = (w * (slope * xs[:, None] + icpt)).sum(axis=1)
    return ty.inverse(vals)


def cerf_draws(chain, grid, tol=1e-6, max_fail_frac=0.01):
    """Evaluate the CERF for every retained draw of ``chain``.

    Draws whose ``|theta_WZ|`` falls below ``tol`` are dropped and counted.
    Returns ``(values, n_failed)``; raises when more than ``max_fail_frac``
    of draws fail.
    """
    moments = MomentCache(chain.moments)
    tx = chain.transforms.get("x", IDENTITY)
    ty = chain.transforms.get("y", IDENTITY)
    xs = tx.forward(np.asarray(grid, dtype=float))
    keep = np.ones(len(chain), dtype=bool)
    theta_w = chain.theta_w
    if chain.mode == "bnp_nc":
        keep = np.abs(theta_w[:, 2]) > tol
    n_failed = int((~keep).sum())
    if len(chain) and n_failed / len(chain) > max_fail_frac:
        raise IdentificationError(
            f"{n_failed} of {len(chain)} draws have |theta_WZ| <= {tol:g}; "
            "the negative controls do not identify the effect "
            "(check assumptions A6/A7)")
    theta_y = chain.theta_y[keep]
    if theta_w is not None:
        theta_w = theta_w[keep]
    slope, icpt = _lines(theta_y, theta_w, chain.mode, chain.y_names,
                         moments, tol)
    D = chain.knots.design(xs)
    alphas = np.einsum("gv,mkv->mgk", D, chain.eta[keep][:, :-1, :])
    w = stick_break(alphas)
    vals = np.einsum("mgk,mgk->mg", w,
                     slope[:, None, :] * xs[None, :, None] + icpt[:, None, :])
    return ty.inverse(vals), n_failed


def summarize(draws, levels=DEFAULT_LEVELS):
    """Pointwise median and central credible bands (type-7 quantiles).

    Returns ``(median, {level: (lower, upper)})``.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    if draws.shape[0] < 2:
        raise ValidationError("need at least 2 draws to summarize")
    median = np.quantile(draws, 0.5, axis=0)
    bands = {}
    for lv in sorted(levels):
        lo, hi = np.quantile(draws, [0.5 - lv / 2, 0.5 + lv / 2], axis=0)
        bands[float(lv)] = (lo, hi)
    return median, bands


def estimate_from_chain(chain, grid, levels=DEFAULT_LEVELS, tol=1e-6,
                        max_fail_frac=0.01, label=None):
    grid = np.asarray(grid, dtype=float)
    vals, n_failed = cerf_draws(chain, grid, tol, max_fail_frac)
    median, bands = summarize(vals, levels)
    label = label or {"bnp_nc": "BNP-NC", "yx": "YX", "yxu": "YXU"}[chain.mode]
    meta = {
        "label": label, "mode": chain.mode, "levels": [float(v) for v in
                                                      sorted(levels)],
        "grid": [float(g) for g in grid], "draws": int(vals.shape[0]),
        "identification_failures": n_failed,
    }
    return CerfEstimate(grid=grid, draws=vals, median=median, bands=bands,
                        label=label, meta=meta)


# ---------------------------------------------------------------------------
# Export


def _level_tag(lv):
    return f"{round(lv * 100):d}"


def cerf_columns(levels):
    cols = ["x", "median"]
    for lv in sorted(levels):
        cols += [f"lo_{_level_tag(lv)}", f"hi_{_level_tag(lv)}"]
    return cols


def write_cerf(est: CerfEstimate, csv_path, meta_path=None):
    levels = est.levels
    try:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cerf_columns(levels)) + "\n")
            for g in range(est.grid.size):
                row = [est.grid[g], est.median[g]]
                for lv in levels:
                    row += [est.bands[lv][0][g], est.bands[lv][1][g]]
                fh.write(",".join(format_float(v) for v in row) + "\n")
        if meta_path is not None:
            Path(meta_path).write_text(
                json.dumps(est.meta, indent=2, sort_keys=True) + "\n",
                encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write CERF output: {exc}") from exc


def read_cerf(csv_path, label=None) -> CerfEstimate:
    """Load a CERF CSV written by :func:`write_cerf` (no draws)."""
    csv_path = Path(csv_path)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValidationError(f"{csv_path} has no CERF rows")
    header, body = rows[0], np.array(rows[1:], dtype=float)
    col = {h: body[:, j] for j, h in enumerate(header)}
    if "x" not in col or "median" not in col:
        raise ValidationError(f"{csv_path} is not a CERF file")
    bands = {}
    for h in header:
        if h.startswith("lo_") and "hi_" + h[3:] in col:
            bands[int(h[3:]) / 100] = (col[h], col["hi_" + h[3:]])
    meta = {}
    meta_path = csv_path.with_suffix(".json")
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    label = label or meta.get("label") or csv_path.stem
    return CerfEstimate(grid=col["x"], draws=np.empty((0, body.shape[0])),
                        median=col["median"], bands=bands, label=label,
                        meta=meta)
