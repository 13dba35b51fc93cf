"""Binomial tails and Hoeffding-Bentkus p-values for bounded losses."""
from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .types import InvalidInputError

# Guards ceil() against m * (k / m) landing a hair above the integer k.
CEIL_TOL = 1e-9


def binomial_cdf(k: int, n: int, p: float) -> float:
    """P(Bin(n, p) <= k), summed in log space."""
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    if k < 0:
        raise InvalidInputError(f"k must be >= 0, got {k}")
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError(f"p must lie in [0, 1], got {p}")
    return math.exp(_kernels.binom_logcdf(k, n, p))


def h1(a: float, b: float) -> float:
    """Bernoulli KL divergence ``a log(a/b) + (1-a) log((1-a)/(1-b))``, with 0 log 0 = 0."""
    return _xlogxy(a, b) + _xlogxy(1.0 - a, 1.0 - b)


def _xlogxy(x: float, y: float) -> float:
    if x == 0.0:
        return 0.0
    if y == 0.0:
        return math.inf
    return x * math.log(x / y)


def _check(r_hat: float, alpha: float, m: int) -> None:
    if m < 1:
        raise InvalidInputError(f"m must be >= 1, got {m}")
    if not 0.0 <= r_hat <= 1.0:
        raise InvalidInputError(f"r_hat must lie in [0, 1], got {r_hat}")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInputError(f"alpha must lie in [0, 1], got {alpha}")


def hb_pvalue(r_hat: float, alpha: float, m: int) -> float:
    """Hoeffding-Bentkus p-value for the null "true risk >= alpha".

    ``min(exp(-m h1(min(r_hat, alpha), alpha)), e * P(Bin(m, alpha) <= ceil(m r_hat)))``
    clipped to [0, 1].  The Hoeffding branch is evaluated at
    ``min(r_hat, alpha)`` so that the p-value is 1 whenever the empirical
    risk is at or above ``alpha``.
    """
    _check(r_hat, alpha, m)
    k = math.ceil(m * r_hat - CEIL_TOL)
    hoeffding = math.exp(-m * h1(min(r_hat, alpha), alpha))
    bentkus = math.e * math.exp(_kernels.binom_logcdf(k, m, alpha))
    return min(1.0, hoeffding, bentkus)


def hb_pvalues(r_hat: np.ndarray, alpha: float, m: int) -> np.ndarray:
    """Vectorised :func:`hb_pvalue` over an array of empirical risks."""
    r = np.asarray(r_hat, dtype=np.float64)
    if r.size and (r.min() < 0.0 or r.max() > 1.0):
        raise InvalidInputError("empirical risks must lie in [0, 1]")
    _check(0.0, alpha, m)
    a = np.minimum(r, alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = _xlogxy_vec(a, alpha) + _xlogxy_vec(1.0 - a, 1.0 - alpha)
        hoeffding = np.exp(-m * kl)
    k = np.clip(np.ceil(m * r - CEIL_TOL).astype(np.int64), 0, m)
    log_cdf = _kernels.binom_logcdf_table(m, alpha)
    bentkus = math.e * np.exp(log_cdf[k])
    return np.minimum(1.0, np.minimum(hoeffding, bentkus))


def _xlogxy_vec(x: np.ndarray, y: float) -> np.ndarray:
    if y == 0.0:
        return np.where(x == 0.0, 0.0, np.inf)
    safe = np.where(x > 0.0, x, 1.0)
    return np.where(x > 0.0, x * np.log(safe / y), 0.0)
