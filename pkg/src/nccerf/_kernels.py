"""Compiled inner loops of the Gibbs sweep.

Random numbers come from the caller's ``numpy.random.Generator``; numba
draws from the same bit generator, so a seeded chain stays reproducible.
"""

import math

import numba
import numpy as np

_SQRT1_2 = 1.0 / math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
TAIL_SWITCH = 6.0

# Acklam's rational approximation to the normal quantile
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)


@numba.njit(cache=True)
def norm_cdf(x):
    return 0.5 * math.erfc(-x * _SQRT1_2)


@numba.njit(cache=True)
def norm_ppf(p):
    """Normal quantile: rational start plus one Halley step."""
    if p <= 0.0:
        return -np.inf
    if p >= 1.0:
        return np.inf
    plow = 0.02425
    if p < plow:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4])
              * q + _C[5]) /
             ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p <= 1.0 - plow:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4])
              * r + _A[5]) * q /
             (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4])
              * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4])
               * q + _C[5]) /
              ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    # refine on the side where the CDF is small, to keep relative accuracy
    if x <= 0.0:
        e = norm_cdf(x) - p
    else:
        e = (1.0 - p) - norm_cdf(-x)
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


@numba.njit(cache=True)
def log_cdf_pair(a):
    """``(log Phi(a), log Phi(-a))`` from a single erfc evaluation."""
    if a < -30.0 or a > 30.0:
        t = -abs(a)
        t2 = t * t
        small = (-0.5 * t2 - math.log(-t) - _LOG_SQRT_2PI
                 + math.log1p(-1.0 / t2 + 3.0 / (t2 * t2)))
        if a < 0:
            return small, 0.0
        return 0.0, small
    tail = 0.5 * math.erfc(abs(a) * _SQRT1_2)  # Phi(-|a|)
    if a < 0:
        return math.log(tail), math.log1p(-tail)
    return math.log1p(-tail), math.log(tail)


@numba.njit(cache=True)
def robert_tail(lower, rng):
    lam = 0.5 * (lower + math.sqrt(lower * lower + 4.0))
    while True:
        z = lower + rng.standard_exponential() / lam
        if rng.random() <= math.exp(-0.5 * (z - lam) ** 2):
            return z


@numba.njit(cache=True)
def std_trunc_lower(lower, rng):
    """One ``N(0, 1)`` draw restricted to ``[lower, inf)``."""
    if lower > TAIL_SWITCH:
        return robert_tail(lower, rng)
    u = 1.0 - rng.random()  # (0, 1]
    if lower <= 0.0:
        lo = norm_cdf(lower)
        x = norm_ppf(lo + (1.0 - u) * (1.0 - lo))
    else:
        x = -norm_ppf(u * norm_cdf(-lower))
    if not (x >= lower) or not math.isfinite(x):
        return robert_tail(max(lower, 0.0), rng)
    return x


@numba.njit(cache=True)
def std_trunc_lower_array(lower, rng):
    out = np.empty(lower.size)
    for i in range(lower.size):
        out[i] = std_trunc_lower(lower[i], rng)
    return out


@numba.njit(cache=True)
def _row_logprobs(yi, mui, sd, logsd, ai, logp):
    """Unnormalised log label probabilities for one observation."""
    K = mui.size
    lrem = 0.0
    for k in range(K):
        r = (yi - mui[k]) / sd[k]
        ll = -logsd[k] - 0.5 * r * r
        if k < K - 1:
            lh, lt = log_cdf_pair(ai[k])
            logp[k] = lh + lrem + ll
            lrem += lt
        else:
            logp[k] = lrem + ll


@numba.njit(cache=True)
def sample_allocations(y, mu, sd, alphas, rng):
    """Categorical label draws from stick weights times normal likelihoods.

    Weights are built as running products and likelihoods are rescaled by
    the row maximum; a row whose total underflows is redone in log space.
    """
    n, K = mu.shape
    out = np.empty(n, dtype=np.intp)
    p = np.empty(K)
    ll = np.empty(K)
    logsd = np.log(sd)
    for i in range(n):
        mx = -np.inf
        for k in range(K):
            r = (y[i] - mu[i, k]) / sd[k]
            ll[k] = -logsd[k] - 0.5 * r * r
            if ll[k] > mx:
                mx = ll[k]
        rem = 1.0
        tot = 0.0
        for k in range(K):
            if k < K - 1:
                a = alphas[i, k]
                tail = 0.5 * math.erfc(abs(a) * _SQRT1_2)
                if a < 0:
                    wk = rem * tail
                    rem = rem * (1.0 - tail)
                else:
                    wk = rem * (1.0 - tail)
                    rem = rem * tail
            else:
                wk = rem
            p[k] = wk * math.exp(ll[k] - mx)
            tot += p[k]
        if not tot > 1e-280:
            _row_logprobs(y[i], mu[i], sd, logsd, alphas[i], p)
            m2 = p.max()
            tot = 0.0
            for k in range(K):
                p[k] = math.exp(p[k] - m2)
                tot += p[k]
        u = rng.random() * tot
        s = K - 1
        while p[s] == 0.0:
            s -= 1
        acc = 0.0
        for k in range(K):
            acc += p[k]
            if u < acc and p[k] > 0.0:
                s = k
                break
        out[i] = s
    return out


@numba.njit(cache=True)
def sample_augmentation(alloc, alphas, rng, q):
    """Latent probit draws: negative before the label, positive at it."""
    n, km1 = alphas.shape
    for i in range(n):
        s = alloc[i]
        for k in range(km1):
            a = alphas[i, k]
            if k < s:
                q[i, k] = a - std_trunc_lower(a, rng)
            elif k == s:
                q[i, k] = a + std_trunc_lower(-a, rng)
            else:
                q[i, k] = 0.0
    return q
