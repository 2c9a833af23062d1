"""Model fitting front door, comparison models and assumption diagnostics.

``fit`` runs the shared Gibbs machinery in one of three modes:

* ``bnp_nc`` -- components regress y on [1, x, z, L]; curve corrected with
  the NCO regression.
* ``yx`` -- components regress y on [1, x, L]; no correction (naive).
* ``yxu`` -- components regress y on [1, x, u, L] with the confounder
  unmasked; the benchmark curve.

``linear_nc`` is the closed-form single-line estimator from two OLS fits.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from .data import Dataset, ModelConfig
from .errors import ConfigError, IdentificationError, ValidationError
from .gibbs import ChainOutput, run_chain, w_columns
from .identification import component_effect, estimate_from_chain

FIT_MODES = ("bnp_nc", "yx", "yxu", "linear_nc")
LABELS = {"bnp_nc": "BNP-NC", "yx": "YX", "yxu": "YXU"}


def normalize_mode(mode: str) -> str:
    m = mode.lower().replace("-", "_")
    if m not in FIT_MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of "
                          + ", ".join(x.replace("_", "-") for x in FIT_MODES))
    return m


def _chain_job(args):
    data, config, mode, c = args
    return run_chain(data, config, mode, chain=c)


def fit_chains(data: Dataset, config: ModelConfig, mode: str = "bnp_nc",
               chains: int = 1, threads: int = 1) -> ChainOutput:
    """Run ``chains`` independent chains and pool their retained draws."""
    jobs = [(data, config, mode, c) for c in range(chains)]
    if threads > 1 and chains > 1:
        with ProcessPoolExecutor(max_workers=min(threads, chains)) as ex:
            outs = list(ex.map(_chain_job, jobs))
    else:
        outs = [_chain_job(j) for j in jobs]
    return outs[0] if chains == 1 else ChainOutput.concatenate(outs)


def fit(data: Dataset, config: ModelConfig = None, mode: str = "bnp_nc",
        grid=None, chains: int = 1, threads: int = 1):
    """Fit a mixture model and return its posterior CERF.

    The returned :class:`CerfEstimate` keeps the pooled chain in ``.chain``.
    """
    config = config or ModelConfig()
    mode = normalize_mode(mode)
    if mode == "linear_nc":
        raise ConfigError("linear_nc returns an effect, use linear_nc()")
    if mode != "yxu":
        data = data.without_u()
    elif data.u_hidden is None:
        raise ConfigError("mode yxu needs the confounder column u")
    chain = fit_chains(data, config, mode, chains, threads)
    g = config.grid.resolve(data.x) if grid is None else np.asarray(grid, float)
    est = estimate_from_chain(chain, g, config.levels, config.tol,
                              config.max_fail_frac, LABELS[mode])
    est.meta.update(chain.meta)
    est.chain = chain
    return est


def fit_bnp_nc(data, config=None, **kw):
    return fit(data, config, "bnp_nc", **kw)


def fit_yx(data, config=None, **kw):
    """Naive mixture fit ignoring the confounder and the negative controls."""
    return fit(data, config, "yx", **kw)


def fit_yxu(data, config=None, u_column=None, **kw):
    """Benchmark fit adjusting for the confounder directly.

    ``u_column`` optionally names a covariate of ``data`` to use as the
    confounder instead of ``data.u_hidden``.
    """
    if u_column is not None:
        if u_column not in data.covariate_names:
            raise ConfigError(f"no covariate named {u_column!r}")
        j = data.covariate_names.index(u_column)
        keep = [i for i in range(data.p) if i != j]
        data = Dataset(
            y=data.y, x=data.x, z=data.z, w=data.w,
            covariates=data.covariates[:, keep] if keep else None,
            covariate_names=tuple(data.covariate_names[i] for i in keep),
            u_hidden=data.covariates[:, j])
    return fit(data, config, "yxu", **kw)


# ---------------------------------------------------------------------------
# Closed-form linear estimator


@dataclass
class LinearNCResult:
    estimate: float
    ci_low: float
    ci_high: float
    se: float
    n_boot: int
    theta_y: np.ndarray
    theta_w: np.ndarray

    def as_row(self) -> dict:
        return {"estimate": self.estimate, "ci_low": self.ci_low,
                "ci_high": self.ci_high, "se": self.se, "n_boot": self.n_boot,
                "theta_yx": float(self.theta_y[1]),
                "theta_yz": float(self.theta_y[2]),
                "theta_wx": float(self.theta_w[1]),
                "theta_wz": float(self.theta_w[2])}


def linear_generator(n: int = 5000, seed: int = 0, beta: float = 2.0,
                     noise_var: float = 0.1) -> Dataset:
    """Linear system with a known exposure effect ``beta``.

    ``U ~ N(0, 1)``; ``Z = U + e``, ``W = -2U + e``, ``X = U + e`` and
    ``Y = beta X + 3U + e`` with independent noise of variance ``noise_var``.
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    s = math.sqrt(noise_var)
    u = rng.normal(0.0, 1.0, n)
    z = u + rng.normal(0.0, s, n)
    w = -2.0 * u + rng.normal(0.0, s, n)
    x = u + rng.normal(0.0, s, n)
    y = beta * x + 3.0 * u + rng.normal(0.0, s, n)
    return Dataset(y=y, x=x, z=z, w=w, u_hidden=u)


def _ols(X, v):
    return np.linalg.lstsq(X, v, rcond=None)[0]


def _wz_scale(d: Dataset) -> float:
    # converts theta_WZ to the standardized scale the tolerance refers to
    sw, sz = np.std(d.w, ddof=1), np.std(d.z, ddof=1)
    return sz / sw if sw > 0 else math.inf


def linear_nc(data: Dataset, n_boot: int = 1000, seed: int = 0,
              tol: float = 1e-6, level: float = 0.95) -> LinearNCResult:
    """Single-line NC-corrected effect of x on y with a bootstrap interval.

    OLS of y and of w on ``[1, x, z, L]``; the effect is
    ``theta_YX - theta_YZ * theta_WX / theta_WZ``. ``n_boot=0`` skips the
    bootstrap (interval and SE are NaN).
    """
    names, X = w_columns(data)
    ty = _ols(X, data.y)
    tw = _ols(X, data.w)
    scale = _wz_scale(data)
    if not abs(tw[2]) * scale > tol:
        raise IdentificationError(
            f"|theta_WZ| = {abs(tw[2]):.3g} is below tolerance: w carries no "
            "information on z given x (assumptions A6/A7 look violated)")
    est = float(component_effect(ty, tw, tol=0.0))
    lo = hi = se = math.nan
    if n_boot > 0:
        rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
        n = data.n
        boots = np.empty(n_boot)
        for b in range(n_boot):
            idx = rng.integers(0, n, n)
            Xb = X[idx]
            boots[b] = component_effect(_ols(Xb, data.y[idx]),
                                        _ols(Xb, data.w[idx]), tol=0.0)
        lo, hi = np.quantile(boots, [(1 - level) / 2, (1 + level) / 2])
        se = float(np.std(boots, ddof=1))
    return LinearNCResult(est, float(lo), float(hi), se, n_boot, ty, tw)


# ---------------------------------------------------------------------------
# Assumption diagnostics


def partial_correlation(a, b, given=None) -> float:
    """Correlation of ``a`` and ``b`` after linearly removing ``given``."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    n = a.size
    Z = np.ones((n, 1))
    if given is not None:
        g = np.asarray(given, float)
        Z = np.column_stack([Z, g.reshape(n, -1)])
    ra = a - Z @ _ols(Z, a)
    rb = b - Z @ _ols(Z, b)
    denom = math.sqrt((ra @ ra) * (rb @ rb))
    if denom == 0:
        raise ValidationError("partial correlation undefined (constant residuals)")
    return float(np.clip((ra @ rb) / denom, -1.0, 1.0))


def fisher_z_interval(r: float, n: int, k: int, level: float = 0.95):
    """Fisher-z interval for a partial correlation given ``k`` conditioners."""
    dof = n - k - 3
    if dof <= 0:
        raise ValidationError(
            f"need more than {k + 3} rows for a test with {k} conditioner(s), "
            f"got {n}")
    zr = math.atanh(min(max(r, -1 + 1e-15), 1 - 1e-15))
    half = norm.ppf(0.5 + level / 2) / math.sqrt(dof)
    return math.tanh(zr - half), math.tanh(zr + half)


@dataclass
class CITestRow:
    assumption: str
    null: str
    estimate: float
    ci_low: float
    ci_high: float
    conclusion: str
    table_row: str = ""


@dataclass
class AssumptionReport:
    rows: list

    COLUMNS = ("assumption", "null", "estimate", "ci_low", "ci_high",
               "conclusion")

    def to_text(self) -> str:
        cells = [("Assumption", "H0", "Estimate", "95% CI", "Conclusion")]
        for r in self.rows:
            cells.append((r.assumption, r.null, f"{r.estimate:.4f}",
                          f"[{r.ci_low:.4f}, {r.ci_high:.4f}]", r.conclusion))
        widths = [max(len(c[j]) for c in cells) for j in range(5)]
        lines = ["  ".join(c[j].ljust(widths[j]) for j in range(5)).rstrip()
                 for c in cells]
        lines.insert(1, "  ".join("-" * w for w in widths))
        lines.append("(linear partial-correlation tests, Fisher-z intervals)")
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        import csv
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(self.COLUMNS)
            for r in self.rows:
                wr.writerow([r.assumption, r.null, repr(r.estimate),
                             repr(r.ci_low), repr(r.ci_high), r.conclusion])


def _ci_row(name, null, a, b, given, n, k, expect_dependent, level):
    r = partial_correlation(a, b, given)
    lo, hi = fisher_z_interval(r, n, k, level)
    covers = lo <= 0 <= hi
    holds = (not covers) if expect_dependent else covers
    tag = name.split(":")[0].split(" ")[0]
    return CITestRow(name, null, r, lo, hi,
                     f"{tag} {'holds' if holds else 'violated'}")


def assumption_tests(data: Dataset, u=None, level: float = 0.95
                     ) -> AssumptionReport:
    """Linear conditional-independence checks of the NC assumptions.

    With the confounder available (``u`` or ``data.u_hidden``) this gives
    the linear rows of the usual diagnostic table: A4 ``X _||_ W | U``,
    A5 ``W _||_ Z | U`` (should hold), A6 ``W _||_ U`` and A7
    ``U _||_ Z | X`` (should be rejected). Without it only the observable
    proxy ``W _||_ Z | X`` is reported; rejecting it means ``theta_WZ != 0``.
    """
    u = data.u_hidden if u is None else np.asarray(u, float)
    n = data.n
    rows = []
    if u is not None:
        rows.append(_ci_row("A4", "X _||_ W | U", data.x, data.w, u, n, 1,
                            False, level))
        rows.append(_ci_row("A5", "W _||_ Z | U", data.w, data.z, u, n, 1,
                            False, level))
        rows.append(_ci_row("A6: beta_WU != 0", "W _||_ U", data.w, u, None,
                            n, 0, True, level))
        rows.append(_ci_row("A7: beta_UZ != 0", "U _||_ Z | X", u, data.z,
                            data.x, n, 1, True, level))
    else:
        rows.append(_ci_row("A6/A7 (observable): theta_WZ != 0",
                            "W _||_ Z | X", data.w, data.z, data.x, n, 1,
                            True, level))
    return AssumptionReport(rows)
