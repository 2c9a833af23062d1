"""Domain types, CSV ingestion and standardization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, ParseError, StorageError, ValidationError

CORE_COLUMNS = ("y", "x", "z", "w")


def _frozen(a, ndim=1):
    a = np.array(a, dtype=float, copy=True)
    if a.ndim != ndim:
        raise ValidationError(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed data: outcome ``y``, exposure ``x``, NCE ``z`` and NCO ``w``.

    ``covariates`` holds measured confounders (n x p). ``u_hidden`` is the
    simulated confounder and is only ever populated by the simulators or
    when a CSV explicitly maps a ``u`` column.
    """

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    w: np.ndarray
    covariates: Optional[np.ndarray] = None
    u_hidden: Optional[np.ndarray] = None
    covariate_names: tuple = ()

    def __post_init__(self):
        for name in CORE_COLUMNS:
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = self.y.shape[0]
        if n < 1:
            raise ValidationError("dataset is empty")
        for name in CORE_COLUMNS:
            col = getattr(self, name)
            if col.shape[0] != n:
                raise ValidationError(
                    f"column {name!r} has length {col.shape[0]}, expected {n}")
            if not np.all(np.isfinite(col)):
                raise ValidationError(f"column {name!r} has non-finite values")
        if self.covariates is not None:
            cov = np.array(self.covariates, dtype=float, copy=True)
            if cov.ndim == 1:
                cov = cov[:, None]
            if cov.shape[0] != n:
                raise ValidationError("covariate matrix has the wrong row count")
            if not np.all(np.isfinite(cov)):
                raise ValidationError("covariates have non-finite values")
            cov.setflags(write=False)
            object.__setattr__(self, "covariates", cov)
            names = tuple(self.covariate_names) or tuple(
                f"l{j + 1}" for j in range(cov.shape[1]))
            if len(names) != cov.shape[1]:
                raise ValidationError("covariate_names does not match covariates")
            object.__setattr__(self, "covariate_names", names)
        if self.u_hidden is not None:
            u = _frozen(self.u_hidden)
            if u.shape[0] != n or not np.all(np.isfinite(u)):
                raise ValidationError("u_hidden must be finite with length n")
            object.__setattr__(self, "u_hidden", u)
        if np.unique(self.x).size < 2:
            raise ValidationError(
                "exposure x needs at least 2 distinct values "
                "(quantile cutpoints are undefined otherwise)")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return 0 if self.covariates is None else self.covariates.shape[1]

    def without_u(self) -> "Dataset":
        return replace(self, u_hidden=None)

    def columns(self) -> dict:
        """Ordered mapping of column name to values, as written to CSV."""
        cols = {name: getattr(self, name) for name in CORE_COLUMNS}
        for j, name in enumerate(self.covariate_names):
            cols[name] = self.covariates[:, j]
        if self.u_hidden is not None:
            cols["u"] = self.u_hidden
        return cols


# ---------------------------------------------------------------------------
# CSV I/O


def format_float(v: float) -> str:
    # repr gives the shortest string that round-trips
    return repr(float(v))


def save_csv(d: Dataset, path) -> Path:
    path = Path(path)
    cols = d.columns()
    names = list(cols)
    data = np.column_stack([cols[k] for k in names])
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(names)
            for row in data:
                writer.writerow([format_float(v) for v in row])
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
    return path


def load_csv(path, column_map: Optional[Mapping[str, str]] = None,
             covariates: Sequence[str] = (), u_column: Optional[str] = None
             ) -> Dataset:
    """Read a headered CSV into a validated :class:`Dataset`.

    Parameters
    ----------
    path : path-like
        UTF-8 CSV file with a header row.
    column_map : mapping, optional
        Maps the roles ``y``, ``x``, ``z``, ``w`` to header names. Roles not
        given are looked up under their own name.
    covariates : sequence of str
        Header names of measured confounders.
    u_column : str, optional
        Header name of the confounder column, when available.

    Raises
    ------
    ConfigError
        A mapped column is absent.
    ParseError
        A cell is not numeric; the message names the row and column.
    ValidationError
        Rows with missing values (indices are listed), or a dataset
        invariant fails.
    """
    path = Path(path)
    column_map = dict(column_map or {})
    roles = {r: column_map.get(r, r) for r in CORE_COLUMNS}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ValidationError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    wanted = list(roles.values()) + list(covariates)
    if u_column:
        wanted.append(u_column)
    missing = [c for c in wanted if c not in header]
    if missing:
        raise ConfigError(f"missing column(s): {', '.join(missing)}")
    idx = {c: header.index(c) for c in wanted}
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    values = np.empty((len(body), len(wanted)))
    incomplete = []
    for i, row in enumerate(body):
        for j, c in enumerate(wanted):
            k = idx[c]
            cell = row[k].strip() if k < len(row) else ""
            if cell == "" or cell.upper() in ("NA", "NAN"):
                values[i, j] = np.nan
                continue
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise ParseError(
                    f"row {i + 1}, column {c!r}: cannot parse {cell!r}") from None
    bad = np.where(~np.all(np.isfinite(values), axis=1))[0]
    if bad.size:
        shown = ", ".join(str(b + 1) for b in bad[:20])
        raise ValidationError(
            f"{bad.size} row(s) with missing or non-finite values: {shown}"
            + (" ..." if bad.size > 20 else ""))
    col = {c: values[:, j] for j, c in enumerate(wanted)}
    cov = np.column_stack([col[c] for c in covariates]) if covariates else None
    return Dataset(
        y=col[roles["y"]], x=col[roles["x"]], z=col[roles["z"]],
        w=col[roles["w"]], covariates=cov,
        u_hidden=col[u_column] if u_column else None,
        covariate_names=tuple(covariates))


# ---------------------------------------------------------------------------
# Standardization


@dataclass(frozen=True)
class Affine:
    """``forward(v) = (v - loc) / scale``."""

    loc: float = 0.0
    scale: float = 1.0

    def forward(self, v):
        return (np.asarray(v, dtype=float) - self.loc) / self.scale

    def inverse(self, v):
        return np.asarray(v, dtype=float) * self.scale + self.loc

    @classmethod
    def fit(cls, v, name="column"):
        v = np.asarray(v, dtype=float)
        sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        if not sd > 0:
            raise ValidationError(f"{name} has zero variance; cannot standardize")
        return cls(float(np.mean(v)), sd)


IDENTITY = Affine()


def standardize(d: Dataset, enabled: bool = True):
    """Center and scale every column to mean 0, SD 1 (``ddof=1``).

    Returns the transformed dataset and a dict of :class:`Affine` maps keyed
    by column name (covariates by their names, the confounder as ``"u"``).
    With ``enabled=False`` the dataset is returned as-is with identity maps,
    which keeps downstream code on a single path.
    """
    names = list(d.columns())
    if not enabled:
        return d, {k: IDENTITY for k in names}
    tr = {k: Affine.fit(v, k) for k, v in d.columns().items()}
    cov = None
    if d.covariates is not None:
        cov = np.column_stack([tr[c].forward(d.covariates[:, j])
                               for j, c in enumerate(d.covariate_names)])
    out = Dataset(
        y=tr["y"].forward(d.y), x=tr["x"].forward(d.x),
        z=tr["z"].forward(d.z), w=tr["w"].forward(d.w), covariates=cov,
        u_hidden=None if d.u_hidden is None else tr["u"].forward(d.u_hidden),
        covariate_names=d.covariate_names)
    return out, tr


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class PriorSpec:
    """Conjugate prior hyperparameters.

    Coefficients get ``theta | s2 ~ N(m0, s2 * V0)`` and the noise variance
    ``s2 ~ InvGamma(a0, b0)``. ``m0`` may be a scalar (broadcast) or a vector
    and ``V0`` a scalar (times identity) or a full matrix; both are resolved
    against the design width at fit time. Weight-model coefficients get
    ``N(mu_eta, 1)``.
    """

    m0_y: object = 0.0
    V0_y: object = 100.0
    a0_y: float = 1.0
    b0_y: float = 1.0
    m0_w: object = 0.0
    V0_w: object = 100.0
    a0_w: float = 1.0
    b0_w: float = 1.0
    mu_eta: float = 0.0

    def __post_init__(self):
        for name in ("a0_y", "b0_y", "a0_w", "b0_w"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("V0_y", "V0_w"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.ndim == 0:
                if not v > 0:
                    raise ConfigError(f"{name} must be positive definite")
            else:
                _check_spd(v, name)

    def resolve(self, which: str, width: int):
        """Return ``(m0, V0)`` as a length-``width`` vector and a matrix."""
        m0 = np.asarray(getattr(self, f"m0_{which}"), dtype=float)
        V0 = np.asarray(getattr(self, f"V0_{which}"), dtype=float)
        m0 = np.full(width, float(m0)) if m0.ndim == 0 else m0.copy()
        V0 = float(V0) * np.eye(width) if V0.ndim == 0 else V0.copy()
        if m0.shape != (width,) or V0.shape != (width, width):
            raise ConfigError(
                f"prior for the {which}-regression must have width {width}")
        return m0, V0


def _check_spd(v, name):
    if v.ndim != 2 or v.shape[0] != v.shape[1] or not np.allclose(v, v.T):
        raise ConfigError(f"{name} must be a symmetric matrix")
    try:
        np.linalg.cholesky(v)
    except np.linalg.LinAlgError:
        raise ConfigError(f"{name} must be positive definite") from None


@dataclass(frozen=True)
class CerfGrid:
    """Exposure grid for CERF evaluation.

    Explicit ``values`` win; otherwise ``points`` equally spaced values
    between the ``lower`` and ``upper`` empirical quantiles of observed x.
    """

    points: int = 100
    lower: float = 0.01
    upper: float = 0.99
    values: Optional[tuple] = None

    def resolve(self, x) -> np.ndarray:
        if self.values is not None:
            g = np.asarray(self.values, dtype=float)
        else:
            lo, hi = np.quantile(np.asarray(x, float), [self.lower, self.upper])
            g = np.linspace(lo, hi, self.points)
        if g.ndim != 1 or g.size < 1 or np.any(np.diff(g) <= 0):
            raise ConfigError("CERF grid must be strictly ascending")
        return g


@dataclass(frozen=True)
class ModelConfig:
    K: int = 20
    n_knots: int = 4
    iterations: int = 4000
    burn_in: int = 2000
    thinning: int = 2
    seed: int = 0
    priors: PriorSpec = field(default_factory=PriorSpec)
    grid: CerfGrid = field(default_factory=CerfGrid)
    standardize: bool = True
    levels: tuple = (0.5, 0.8, 0.9, 0.95)
    tol: float = 1e-6
    max_fail_frac: float = 0.01
    # when set, component noise SDs are held at this value (validation runs)
    fixed_sigma_y: Optional[float] = None

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.n_knots < 1:
            raise ConfigError("n_knots must be >= 1")
        if self.iterations < 1 or not 0 <= self.burn_in < self.iterations:
            raise ConfigError("need 0 <= burn_in < iterations")
        if self.thinning < 1:
            raise ConfigError("thinning must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if any(not 0 < lv < 1 for lv in self.levels):
            raise ConfigError("credible levels must lie in (0, 1)")
        if self.fixed_sigma_y is not None and not self.fixed_sigma_y > 0:
            raise ConfigError("fixed_sigma_y must be positive")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thinning

    def check_against(self, n: int) -> None:
        if self.n_knots > max(1, n // 10):
            raise ConfigError(
                f"n_knots={self.n_knots} too large for n={n} "
                "(each segment needs about 10 observations)")

    def with_(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# Sampler state and outputs


@dataclass
class ParameterState:
    """Values of one Gibbs sweep.

    ``alloc`` labels are 0-based (component ``k`` is ``alloc == k``).
    ``sigma_y`` and ``sigma_w`` are noise standard deviations.
    """

    theta_y: np.ndarray   # (K, p_y)
    sigma_y: np.ndarray   # (K,)
    theta_w: Optional[np.ndarray]  # (p_w,)
    sigma_w: Optional[float]
    eta: np.ndarray       # (K, 1 + V)
    alloc: Optional[np.ndarray] = None    # (n,)
    q_latent: Optional[np.ndarray] = None  # (n, K - 1)

    @property
    def K(self) -> int:
        return self.theta_y.shape[0]

    def validate(self) -> None:
        if np.any(self.sigma_y <= 0) or (
                self.sigma_w is not None and not self.sigma_w > 0):
            raise ValidationError("noise SDs must be positive")
        if self.alloc is not None and (
                self.alloc.min() < 0 or self.alloc.max() >= self.K):
            raise ValidationError("allocation label out of range")


@dataclass
class CerfEstimate:
    """Posterior CERF on the original exposure/outcome scale.

    ``bands`` maps each credible level to a ``(lower, upper)`` pair of arrays.
    """

    grid: np.ndarray
    draws: np.ndarray
    median: np.ndarray
    bands: dict
    label: str = "BNP-NC"
    meta: dict = field(default_factory=dict)
    chain: object = None

    @property
    def levels(self):
        return sorted(self.bands)
