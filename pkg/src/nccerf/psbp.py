"""Dependent probit stick-breaking weights.

Each stick fraction is ``Phi(alpha_k(x))`` where ``alpha_k`` is piecewise
linear in the exposure: one shared intercept plus a separate slope on each
quantile segment of x. The last component takes the leftover mass, so a
truncated weight vector is an exact point of the simplex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class KnotGrid:
    cutpoints: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.cutpoints, dtype=float)
        if c.ndim != 1 or c.size < 2 or np.any(np.diff(c) <= 0):
            raise ValidationError("knot cutpoints must be strictly ascending")
        object.__setattr__(self, "cutpoints", c)

    @property
    def V(self) -> int:
        return self.cutpoints.size - 1

    def segment(self, x):
        """0-based segment index of each x.

        Segments are half-open ``[q_{v-1}, q_v)``; ``x == q_V`` falls in the
        last one, and values outside the range use the nearest end segment.
        """
        return np.searchsorted(self.cutpoints[1:-1], x, side="right")

    def design(self, x) -> np.ndarray:
        """Rows ``[1, x*1{seg 1}, ..., x*1{seg V}]`` of the weight regression."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        D = np.zeros((x.size, 1 + self.V))
        D[:, 0] = 1.0
        D[np.arange(x.size), 1 + self.segment(x)] = x
        return D


def make_knots(x, V: int) -> KnotGrid:
    """Cutpoints at the (type-7) empirical quantiles ``v / V`` of ``x``."""
    x = np.asarray(x, dtype=float)
    if V < 1:
        raise ValidationError("need at least one segment")
    if np.unique(x).size < V + 1:
        raise ValidationError(
            f"x has fewer than {V + 1} distinct values; use fewer knots")
    cuts = np.quantile(x, np.arange(V + 1) / V)
    if np.any(np.diff(cuts) <= 0):
        raise ValidationError(
            f"quantile cutpoints for V={V} are not distinct; use fewer knots")
    return KnotGrid(cuts)


def alpha_at(x, eta_row, knots: KnotGrid):
    """Evaluate ``eta_0 + eta_v * x`` where ``v`` is the segment of ``x``."""
    eta_row = np.asarray(eta_row, dtype=float)
    if eta_row.shape[-1] != 1 + knots.V:
        raise ValidationError("eta row must have 1 + V entries")
    out = knots.design(x) @ eta_row
    return out[0] if np.ndim(x) == 0 else out


def stick_break(alphas) -> np.ndarray:
    """Weights from ``K - 1`` stick logits (last axis); returns ``K`` weights."""
    a = np.asarray(alphas, dtype=float)
    if a.ndim == 0:
        a = a[None]
    head = ndtr(a)
    rest = ndtr(-a)  # 1 - Phi(a) without cancellation
    ones = np.ones(a.shape[:-1] + (1,))
    remain = np.cumprod(np.concatenate([ones, rest], axis=-1), axis=-1)
    return np.concatenate([head, ones], axis=-1) * remain


def log_stick_break(alphas) -> np.ndarray:
    """Log of :func:`stick_break`, stable for saturated logits."""
    a = np.asarray(alphas, dtype=float)
    lh = log_ndtr(a)
    lr = log_ndtr(-a)
    zeros = np.zeros(a.shape[:-1] + (1,))
    lremain = np.cumsum(np.concatenate([zeros, lr], axis=-1), axis=-1)
    return np.concatenate([lh, zeros], axis=-1) + lremain


def alphas_matrix(x, eta, knots: KnotGrid) -> np.ndarray:
    """``alpha_k(x_i)`` for the first ``K - 1`` components, shape (n, K-1)."""
    eta = np.asarray(eta, dtype=float)
    return knots.design(x) @ eta[:-1].T


def weights_at(x, eta, knots: KnotGrid) -> np.ndarray:
    """Mixture weights at ``x`` (scalar -> (K,), vector -> (n, K))."""
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    w = stick_break(alphas_matrix(x, eta, knots))
    return w[0] if np.ndim(x) == 0 else w
