"""Pure numpy implementations of the hot loops (fallback backend)."""
from __future__ import annotations

import math

import numpy as np


def step_stats(logits, n_intents, amap, num_actions, true_intent, theta):
    S, nmax = logits.shape
    valid = np.arange(nmax)[None, :] < n_intents[:, None]
    z = np.where(valid, theta * logits, -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    amax = max(int(num_actions.max()), 1)
    rows = np.broadcast_to(np.arange(S)[:, None], (S, nmax))[valid]
    cols = amap[valid]
    agg = np.zeros((S, amax))
    np.add.at(agg, (rows, cols), p[valid])
    reached = np.zeros((S, amax), dtype=bool)
    reached[rows, cols] = True
    agg = np.where(reached, agg, -1.0)

    true_score = agg[np.arange(S), amap[np.arange(S), true_intent]]
    if amax == 1:
        return true_score, agg[:, 0].copy(), np.full(S, -1.0)
    top = np.sort(agg, axis=1)
    return true_score, top[:, -1].copy(), top[:, -2].copy()


LN_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
S0, S1, S2, S3, S4 = 1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188


def _stirlerr(n):
    """log(n!) - log(sqrt(2 pi n) (n/e)^n) for an array of non-negative integers."""
    n = np.asarray(n, dtype=np.float64)
    out = np.empty_like(n)
    small = n <= 15
    out[small] = [
        math.lgamma(v + 1.0) - (v + 0.5) * math.log(v) + v - LN_SQRT_2PI if v > 0 else 0.0
        for v in n[small]
    ]
    nb = n[~small]
    nn = nb * nb
    out[~small] = np.select(
        [nb > 500, nb > 80, nb > 35],
        [(S0 - S1 / nn) / nb,
         (S0 - (S1 - S2 / nn) / nn) / nb,
         (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / nb],
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / nb,
    )
    return out


def _bd0(x, M):
    """Deviance term x log(x/M) + M - x without cancellation for x near M."""
    out = x * np.log(x / M) + M - x
    near = np.abs(x - M) < 0.1 * (x + M)
    if near.any():
        xs = x[near]
        v = (xs - M) / (xs + M)
        s = (xs - M) * v
        ej = 2.0 * xs * v
        v2 = v * v
        for j in range(1, 1000):
            ej = ej * v2
            s1 = s + ej / (2 * j + 1)
            if np.array_equal(s1, s):
                break
            s = s1
        out[near] = s
    return out


def _log_pmf_terms(n, p):
    out = np.empty(n + 1)
    out[0] = n * math.log1p(-p)
    out[n] = n * math.log(p)
    if n > 1:
        x = np.arange(1, n, dtype=np.float64)
        lc = (_stirlerr(n)[()] - _stirlerr(x) - _stirlerr(n - x)
              - _bd0(x, n * p) - _bd0(n - x, n * (1.0 - p)))
        lf = 2.0 * LN_SQRT_2PI + np.log(x) + np.log1p(-x / n)
        out[1:n] = lc - 0.5 * lf
    return out


def binom_logcdf_table(n, p):
    if p <= 0.0:
        return np.zeros(n + 1)
    if p >= 1.0:
        out = np.full(n + 1, -np.inf)
        out[n] = 0.0
        return out
    out = np.logaddexp.accumulate(_log_pmf_terms(n, p))
    return np.minimum(out, 0.0)


def binom_logcdf(k, n, p):
    if k >= n or p <= 0.0:
        return 0.0
    if k < 0 or p >= 1.0:
        return -math.inf
    terms = _log_pmf_terms(n, p)[: k + 1]
    return min(float(np.logaddexp.accumulate(terms)[-1]), 0.0)
