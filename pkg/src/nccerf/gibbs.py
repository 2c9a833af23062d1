"""Gibbs sampler for the probit stick-breaking mixture of linear regressions.

One sweep updates, in order: component labels, the per-component outcome
regressions, the probit augmentation variables, the weight-model
coefficients (and with them the stick logits and weights), and finally the
single NCO regression of ``w`` on ``[1, x, z, L]``.

All conjugate updates are vectorised over components: per-observation outer
products are precomputed once and reduced with a one-hot matrix product.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from . import _kernels as _k
from .config import config_items
from .data import Dataset, ModelConfig, ParameterState, format_float, standardize
from .errors import ConfigError, NCCerfError, NumericalError, StorageError
from .psbp import KnotGrid, make_knots

MODES = ("bnp_nc", "yx", "yxu")

def chain_rng(seed: int, chain: int = 0) -> np.random.Generator:
    """Independent, reproducible stream for chain ``chain`` of a run."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(chain),))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# Truncated normal


def std_trunc_lower(lower, rng) -> np.ndarray:
    """Draw ``N(0, 1)`` restricted to ``[lower, inf)``, elementwise.

    Inverse-CDF on the better-conditioned tail for ``lower <= 6``; beyond
    that, exponential-proposal rejection (Robert, 1995).
    """
    lower = np.asarray(lower, dtype=float)
    flat = np.ascontiguousarray(lower.ravel())
    return _k.std_trunc_lower_array(flat, rng).reshape(lower.shape)


def rtruncnorm(mean, lower=None, upper=None, rng=None):
    """Unit-variance normal around ``mean`` truncated to one side."""
    mean = np.asarray(mean, dtype=float)
    if (lower is None) == (upper is None):
        raise ValueError("give exactly one of lower / upper")
    if lower is not None:
        return mean + std_trunc_lower(lower - mean, rng)
    return mean - std_trunc_lower(mean - upper, rng)


# ---------------------------------------------------------------------------
# Conjugate regression updates


def nig_posterior(XtX, Xty, yty, n, m0, V0inv, a0, b0):
    """Normal-inverse-gamma posterior, batched over a leading axis.

    Returns ``(mean, precision, shape, scale)`` with
    ``theta | s2 ~ N(mean, s2 * precision^-1)`` and
    ``s2 ~ InvGamma(shape, scale)``.
    """
    prec = V0inv + XtX
    rhs = V0inv @ m0 + Xty
    mean = np.linalg.solve(prec, rhs[..., None])[..., 0]
    quad = (np.einsum("...i,...i->...", rhs, mean))
    scale = b0 + 0.5 * (yty + m0 @ V0inv @ m0 - quad)
    # rounding can push the residual sum slightly negative on exact fits
    scale = np.maximum(scale, b0 * 1e-12)
    return mean, prec, a0 + 0.5 * n, scale


def draw_mvn_precision(mean, prec, scale_factor, rng):
    """Draw ``N(mean, scale_factor**2 * prec^-1)``, batched."""
    L = np.linalg.cholesky(prec)
    e = rng.standard_normal(mean.shape)
    Lt = np.swapaxes(L, -1, -2)
    step = np.linalg.solve(Lt, e[..., None])[..., 0]
    return mean + np.asarray(scale_factor)[..., None] * step


def draw_nig(XtX, Xty, yty, n, prior, rng, fixed_sd=None):
    """One joint draw ``(theta, sd)`` from the NIG full conditional.

    ``prior`` is ``(m0, V0inv, a0, b0)``. With ``fixed_sd`` the variance is
    held and only ``theta | s2`` is drawn.
    """
    m0, V0inv, a0, b0 = prior
    mean, prec, shape, scale = nig_posterior(XtX, Xty, yty, n, m0, V0inv, a0, b0)
    if fixed_sd is None:
        s2 = scale / rng.gamma(shape)
        sd = np.sqrt(s2)
    else:
        sd = np.full(np.shape(shape), float(fixed_sd))
    return draw_mvn_precision(mean, prec, sd, rng), sd


# ---------------------------------------------------------------------------
# Model context


def outcome_columns(d: Dataset, mode: str):
    """Design columns of the component outcome regression for ``mode``."""
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
    cols = [("1", np.ones(d.n)), ("x", d.x)]
    if mode == "bnp_nc":
        cols.append(("z", d.z))
    elif mode == "yxu":
        if d.u_hidden is None:
            raise ConfigError("mode yxu needs a confounder column u")
        cols.append(("u", d.u_hidden))
    for j, name in enumerate(d.covariate_names):
        cols.append((name, d.covariates[:, j]))
    return [c[0] for c in cols], np.column_stack([c[1] for c in cols])


def w_columns(d: Dataset):
    cols = [("1", np.ones(d.n)), ("x", d.x), ("z", d.z)]
    for j, name in enumerate(d.covariate_names):
        cols.append((name, d.covariates[:, j]))
    return [c[0] for c in cols], np.column_stack([c[1] for c in cols])


def _pairwise(X):
    """Flattened per-row outer products, shape (n, p*p)."""
    return (X[:, :, None] * X[:, None, :]).reshape(X.shape[0], -1)


def _prior_tuple(priors, which, width):
    m0, V0 = priors.resolve(which, width)
    return m0, np.linalg.inv(V0), getattr(priors, f"a0_{which}"), getattr(
        priors, f"b0_{which}")


@dataclass
class ChainContext:
    """Everything a sweep needs that does not change between sweeps."""

    data: Dataset          # analysis scale
    mode: str
    K: int
    knots: KnotGrid
    y_names: list
    X: np.ndarray
    y: np.ndarray
    XX: np.ndarray
    Xy: np.ndarray
    D: np.ndarray
    DD: np.ndarray
    prior_y: tuple
    mu_eta: float
    fixed_sd: Optional[float] = None
    w_names: Optional[list] = None
    w_stats: Optional[tuple] = None
    prior_w: Optional[tuple] = None

    @classmethod
    def build(cls, data: Dataset, config: ModelConfig, mode: str = "bnp_nc"):
        config.check_against(data.n)
        names, X = outcome_columns(data, mode)
        knots = make_knots(data.x, config.n_knots)
        D = knots.design(data.x)
        ctx = cls(
            data=data, mode=mode, K=config.K, knots=knots, y_names=names,
            X=X, y=data.y, XX=_pairwise(X), Xy=X * data.y[:, None], D=D,
            DD=_pairwise(D),
            prior_y=_prior_tuple(config.priors, "y", X.shape[1]),
            mu_eta=float(config.priors.mu_eta),
            fixed_sd=config.fixed_sigma_y)
        if mode == "bnp_nc":
            wn, Xw = w_columns(data)
            ctx.w_names = wn
            ctx.w_stats = (Xw.T @ Xw, Xw.T @ data.w, data.w @ data.w, data.n)
            ctx.prior_w = _prior_tuple(config.priors, "w", Xw.shape[1])
        return ctx

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass
class _Sweep:
    """Mutable chain state plus the cached stick logits ``alpha_k(x_i)``."""

    state: ParameterState
    alphas: np.ndarray


def _refresh_weights(sw: _Sweep, ctx: ChainContext):
    sw.alphas = np.ascontiguousarray(ctx.D @ sw.state.eta[:-1].T)


# ---------------------------------------------------------------------------
# Full-conditional updates


def draw_allocations(state, ctx, alphas, rng):
    """Sample labels with ``P(S_i = k) ~ w_k(x_i) N(y_i | mean_ik, sd_k^2)``.

    ``alphas`` are the current stick logits. Likelihoods are rescaled per
    row; rows that underflow are recomputed in log space.
    """
    mu = ctx.X @ state.theta_y.T
    return _k.sample_allocations(ctx.y, mu, np.asarray(state.sigma_y, float),
                                 alphas, rng)


def _onehot(alloc, K):
    return (alloc[:, None] == np.arange(K)).astype(float)


def draw_component_regressions(state, ctx, rng):
    """Joint NIG draws for all components; empty ones come from the prior."""
    K, p = ctx.K, ctx.p
    H = _onehot(state.alloc, K)
    XtX = (H.T @ ctx.XX).reshape(K, p, p)
    Xty = H.T @ ctx.Xy
    yty = H.T @ (ctx.y * ctx.y)
    counts = H.sum(axis=0)
    return draw_nig(XtX, Xty, yty, counts, ctx.prior_y, rng, ctx.fixed_sd)


def draw_component_regression(k, state, ctx, rng):
    """Single-component version of :func:`draw_component_regressions`."""
    rows = state.alloc == k
    X, y = ctx.X[rows], ctx.y[rows]
    theta, sd = draw_nig(X.T @ X, X.T @ y, y @ y, rows.sum(), ctx.prior_y,
                         rng, ctx.fixed_sd)
    return theta, float(sd)


def draw_w_regression(ctx, rng):
    XtX, Xtw, wtw, n = ctx.w_stats
    theta, sd = draw_nig(XtX, Xtw, wtw, n, ctx.prior_w, rng)
    return theta, float(sd)


def augmentation_masks(alloc, K):
    """``(negative, positive)`` boolean masks over the (n, K-1) latent grid.

    Entry ``(i, k)`` is negative for ``k < S_i`` and positive for
    ``k == S_i``; later entries are unused.
    """
    k = np.arange(K - 1)
    return alloc[:, None] > k, alloc[:, None] == k


def draw_augmentation(alloc, alphas, rng, q=None):
    """Truncated-normal latent draws consistent with the labels."""
    alphas = np.ascontiguousarray(alphas, dtype=float)
    if q is None:
        q = np.zeros(alphas.shape)
    return _k.sample_augmentation(np.asarray(alloc, np.intp), alphas, rng, q)


def eta_posterior(DtD, DtQ, mu_eta):
    """Mean and precision of weight coefficients given latent draws.

    Unit observation variance and independent ``N(mu_eta, 1)`` priors.
    """
    m = DtD.shape[-1]
    prec = np.eye(m) + DtD
    rhs = mu_eta + DtQ
    return np.linalg.solve(prec, rhs[..., None])[..., 0], prec


def draw_eta(alloc, q, ctx, rng):
    """Weight-model coefficients for every component.

    Component ``k`` regresses its latent values on the piecewise design over
    rows still "reaching" it (``S_i >= k``). The last component has no stick
    and is refreshed from the prior.
    """
    K, m = ctx.K, ctx.D.shape[1]
    eta = np.empty((K, m))
    if K > 1:
        reach = (alloc[:, None] >= np.arange(K - 1)).astype(float)
        DtD = (reach.T @ ctx.DD).reshape(K - 1, m, m)
        DtQ = (reach * q).T @ ctx.D
        mean, prec = eta_posterior(DtD, DtQ, ctx.mu_eta)
        eta[:-1] = draw_mvn_precision(mean, prec, np.ones(K - 1), rng)
    eta[-1] = ctx.mu_eta + rng.standard_normal(m)
    return eta


# ---------------------------------------------------------------------------
# Driver


@dataclass
class ChainOutput:
    """Retained draws of one chain, stacked along the first axis.

    Latent augmentation values are not retained (they are n x (K-1) per
    draw and no downstream quantity needs them).
    """

    theta_y: np.ndarray
    sigma_y: np.ndarray
    eta: np.ndarray
    alloc: np.ndarray
    theta_w: Optional[np.ndarray]
    sigma_w: Optional[np.ndarray]
    knots: KnotGrid
    mode: str
    y_names: list
    w_names: Optional[list]
    transforms: dict
    moments: dict
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.theta_y.shape[0]

    def state(self, i: int) -> ParameterState:
        return ParameterState(
            theta_y=self.theta_y[i], sigma_y=self.sigma_y[i],
            theta_w=None if self.theta_w is None else self.theta_w[i],
            sigma_w=None if self.sigma_w is None else float(self.sigma_w[i]),
            eta=self.eta[i], alloc=self.alloc[i].astype(np.intp))

    def states(self):
        for i in range(len(self)):
            yield self.state(i)

    @property
    def K(self):
        return self.theta_y.shape[1]

    @classmethod
    def concatenate(cls, outs):
        first = outs[0]

        def cat(attr):
            vals = [getattr(o, attr) for o in outs]
            return None if vals[0] is None else np.concatenate(vals)

        meta = dict(first.meta)
        meta["chains"] = len(outs)
        meta["runtime_s"] = sum(o.meta.get("runtime_s", 0.0) for o in outs)
        return cls(
            theta_y=cat("theta_y"), sigma_y=cat("sigma_y"), eta=cat("eta"),
            alloc=cat("alloc"), theta_w=cat("theta_w"), sigma_w=cat("sigma_w"),
            knots=first.knots, mode=first.mode, y_names=first.y_names,
            w_names=first.w_names, transforms=first.transforms,
            moments=first.moments, meta=meta)

    # -- serialization -----------------------------------------------------

    def column_names(self):
        K, p = self.theta_y.shape[1:]
        V1 = self.eta.shape[2]
        cols = [f"theta_y.{k + 1}.{j + 1}" for k in range(K) for j in range(p)]
        cols += [f"sigma_y.{k + 1}" for k in range(K)]
        cols += [f"eta.{k + 1}.{v}" for k in range(K) for v in range(V1)]
        if self.theta_w is not None:
            cols += [f"theta_w.{j + 1}" for j in range(self.theta_w.shape[1])]
            cols.append("sigma_w")
        return cols

    def flat(self) -> np.ndarray:
        m = len(self)
        parts = [self.theta_y.reshape(m, -1), self.sigma_y,
                 self.eta.reshape(m, -1)]
        if self.theta_w is not None:
            parts += [self.theta_w, self.sigma_w[:, None]]
        return np.concatenate(parts, axis=1)

    def write(self, draws_path, meta_path=None):
        """Write the draw CSV (analysis scale) and optional metadata JSON."""
        try:
            with open(draws_path, "w", encoding="utf-8") as fh:
                fh.write(",".join(self.column_names()) + "\n")
                for row in self.flat():
                    fh.write(",".join(format_float(v) for v in row) + "\n")
            if meta_path is not None:
                Path(meta_path).write_text(
                    json.dumps(self.meta, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
        except OSError as exc:
            raise StorageError(f"cannot write chain output: {exc}") from exc


def _init_sweep(ctx: ChainContext, rng) -> _Sweep:
    K, m = ctx.K, ctx.D.shape[1]
    eta = np.full((K, m), ctx.mu_eta)
    state = ParameterState(
        theta_y=np.zeros((K, ctx.p)), sigma_y=np.ones(K), theta_w=None,
        sigma_w=None, eta=eta)
    sw = _Sweep(state, None)
    _refresh_weights(sw, ctx)
    # start with labels tied to exposure quantile bins so components begin
    # spread over the support instead of all fitting the same global line
    nbins = min(K, 5)
    edges = np.quantile(ctx.data.x, np.linspace(0, 1, nbins + 1)[1:-1])
    state.alloc = np.searchsorted(edges, ctx.data.x, side="right")
    state.theta_y, state.sigma_y = draw_component_regressions(state, ctx, rng)
    state.q_latent = draw_augmentation(state.alloc, sw.alphas, rng)
    if ctx.w_stats is not None:
        state.theta_w, state.sigma_w = draw_w_regression(ctx, rng)
    return sw


def sweep(sw: _Sweep, ctx: ChainContext, rng) -> None:
    """One full Gibbs sweep, in place."""
    st = sw.state
    st.alloc = draw_allocations(st, ctx, sw.alphas, rng)
    st.theta_y, st.sigma_y = draw_component_regressions(st, ctx, rng)
    if ctx.K > 1:
        st.q_latent = draw_augmentation(st.alloc, sw.alphas, rng, st.q_latent)
    st.eta = draw_eta(st.alloc, st.q_latent, ctx, rng)
    _refresh_weights(sw, ctx)
    if ctx.w_stats is not None:
        st.theta_w, st.sigma_w = draw_w_regression(ctx, rng)


def run_chain(data: Dataset, config: ModelConfig, mode: str = "bnp_nc",
              chain: int = 0,
              hook: Optional[Callable[[int, ParameterState], None]] = None
              ) -> ChainOutput:
    """Run one Gibbs chain and keep thinned post-burn-in draws.

    ``data`` is on its original scale; it is standardized here unless
    ``config.standardize`` is off, and the transforms travel with the output.
    ``hook(iteration, state)`` is called on every retained state.
    """
    t0 = time.perf_counter()
    sdata, transforms = standardize(data, config.standardize)
    ctx = ChainContext.build(sdata, config, mode)
    rng = chain_rng(config.seed, chain)
    m = config.n_retained
    K, p, V1 = ctx.K, ctx.p, ctx.D.shape[1]
    out = dict(
        theta_y=np.empty((m, K, p)), sigma_y=np.empty((m, K)),
        eta=np.empty((m, K, V1)),
        alloc=np.empty((m, sdata.n), dtype=np.int16 if K < 2**15 else np.int32))
    if ctx.w_stats is not None:
        out["theta_w"] = np.empty((m, len(ctx.w_names)))
        out["sigma_w"] = np.empty(m)
    sw = _init_sweep(ctx, rng)
    j = 0
    for it in range(config.iterations):
        try:
            sweep(sw, ctx, rng)
        except NCCerfError as exc:
            raise type(exc)(f"iteration {it}: {exc}") from exc
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            raise NumericalError(f"iteration {it}: {exc}") from exc
        if it >= config.burn_in and (it - config.burn_in) % config.thinning == 0:
            if j >= m:
                continue
            st = sw.state
            out["theta_y"][j] = st.theta_y
            out["sigma_y"][j] = st.sigma_y
            out["eta"][j] = st.eta
            out["alloc"][j] = st.alloc
            if ctx.w_stats is not None:
                out["theta_w"][j] = st.theta_w
                out["sigma_w"][j] = st.sigma_w
            if hook is not None:
                hook(it, st)
            j += 1
    moments = {"x": float(np.mean(sdata.x)), "z": float(np.mean(sdata.z))}
    for c, name in enumerate(sdata.covariate_names):
        moments[name] = float(np.mean(sdata.covariates[:, c]))
    if sdata.u_hidden is not None:
        moments["u"] = float(np.mean(sdata.u_hidden))
    meta = {
        "version": __version__, "mode": mode, "seed": int(config.seed),
        "chain": chain, "iterations": config.iterations,
        "burn_in": config.burn_in, "thinning": config.thinning,
        "retained": m, "K": K, "n_knots": config.n_knots,
        "standardized": bool(config.standardize), "all_gibbs": True,
        "n": sdata.n, "runtime_s": time.perf_counter() - t0,
        "config": config_items(config),
        "transforms": {k: [t.loc, t.scale] for k, t in transforms.items()},
    }
    return ChainOutput(
        theta_y=out["theta_y"], sigma_y=out["sigma_y"], eta=out["eta"],
        alloc=out["alloc"], theta_w=out.get("theta_w"),
        sigma_w=out.get("sigma_w"), knots=ctx.knots, mode=mode,
        y_names=ctx.y_names, w_names=ctx.w_names, transforms=transforms,
        moments=moments, meta=meta)
