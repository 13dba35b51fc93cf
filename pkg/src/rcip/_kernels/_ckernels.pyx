# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.  Contracts are identical to ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, log, lgamma, log1p, INFINITY

cnp.import_array()


def step_stats(const double[:, ::1] logits,
               const cnp.int64_t[::1] n_intents,
               const cnp.int64_t[:, ::1] amap,
               const cnp.int64_t[::1] num_actions,
               const cnp.int64_t[::1] true_intent,
               double theta):
    """Per-step aggregated scores at temperature ``theta``.

    Returns ``(true_score, top1, top2)``; ``top2`` is -1 when a step has a
    single reachable action.
    """
    cdef Py_ssize_t S = logits.shape[0]
    cdef Py_ssize_t amax = 1
    cdef Py_ssize_t s, z, a, n, na
    for s in range(S):
        if num_actions[s] > amax:
            amax = num_actions[s]
    true_out = np.empty(S, dtype=np.float64)
    top1_out = np.empty(S, dtype=np.float64)
    top2_out = np.empty(S, dtype=np.float64)
    cdef double[::1] ts = true_out
    cdef double[::1] t1 = top1_out
    cdef double[::1] t2 = top2_out
    cdef double[::1] agg = np.empty(amax, dtype=np.float64)
    cdef double[::1] e = np.empty(logits.shape[1], dtype=np.float64)
    cdef double m, tot, v, b1, b2
    with nogil:
        for s in range(S):
            n = n_intents[s]
            na = num_actions[s]
            m = -INFINITY
            for z in range(n):
                v = theta * logits[s, z]
                if v > m:
                    m = v
            tot = 0.0
            for z in range(n):
                e[z] = exp(theta * logits[s, z] - m)
                tot = tot + e[z]
            for a in range(na):
                agg[a] = -1.0
            for z in range(n):
                a = amap[s, z]
                if agg[a] < 0.0:
                    agg[a] = 0.0
                agg[a] = agg[a] + e[z] / tot
            ts[s] = agg[amap[s, true_intent[s]]]
            b1 = -1.0
            b2 = -1.0
            for a in range(na):
                v = agg[a]
                if v > b1:
                    b2 = b1
                    b1 = v
                elif v > b2:
                    b2 = v
            t1[s] = b1
            t2[s] = b2
    return true_out, top1_out, top2_out


cdef inline double _logaddexp(double x, double y) nogil:
    if x == -INFINITY:
        return y
    if y == -INFINITY:
        return x
    if x > y:
        return x + log1p(exp(y - x))
    return y + log1p(exp(x - y))


cdef double LN_SQRT_2PI = 0.918938533204672741780329736406
cdef double S0 = 1.0 / 12, S1 = 1.0 / 360, S2 = 1.0 / 1260, S3 = 1.0 / 1680, S4 = 1.0 / 1188


cdef inline double _stirlerr(double n) nogil:
    """log(n!) - log(sqrt(2 pi n) (n/e)^n)."""
    cdef double nn
    if n <= 15.0:
        if n == 0.0:
            return 0.0
        return lgamma(n + 1.0) - (n + 0.5) * log(n) + n - LN_SQRT_2PI
    nn = n * n
    if n > 500.0:
        return (S0 - S1 / nn) / n
    if n > 80.0:
        return (S0 - (S1 - S2 / nn) / nn) / n
    if n > 35.0:
        return (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    return (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n


cdef inline double _bd0(double x, double M) nogil:
    """Deviance term x log(x/M) + M - x without cancellation for x near M."""
    cdef double v, s, s1, ej
    cdef int j
    if fabs(x - M) < 0.1 * (x + M):
        v = (x - M) / (x + M)
        s = (x - M) * v
        ej = 2.0 * x * v
        v = v * v
        for j in range(1, 1000):
            ej = ej * v
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
        return s
    return x * log(x / M) + M - x


cdef inline double _log_pmf(long i, long n, double p) nogil:
    cdef double x, lc, lf
    if i == 0:
        return n * log1p(-p)
    if i == n:
        return n * log(p)
    x = <double>i
    lc = (_stirlerr(<double>n) - _stirlerr(x) - _stirlerr(<double>(n - i))
          - _bd0(x, n * p) - _bd0(<double>(n - i), n * (1.0 - p)))
    lf = 2.0 * LN_SQRT_2PI + log(x) + log1p(-x / n)
    return lc - 0.5 * lf


def binom_logcdf_table(long n, double p):
    """log P(Bin(n, p) <= k) for k = 0..n, by cumulative log-sum-exp of log-pmf terms."""
    out = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] o = out
    cdef long i
    cdef double acc
    if p <= 0.0:
        out[:] = 0.0
        return out
    if p >= 1.0:
        out[:] = -np.inf
        out[n] = 0.0
        return out
    acc = -INFINITY
    with nogil:
        for i in range(n + 1):
            acc = _logaddexp(acc, _log_pmf(i, n, p))
            o[i] = acc if acc < 0.0 else 0.0
    return out


def binom_logcdf(long k, long n, double p):
    cdef long i
    cdef double acc
    if k >= n or p <= 0.0:
        return 0.0
    if k < 0 or p >= 1.0:
        return -INFINITY
    acc = -INFINITY
    for i in range(k + 1):
        acc = _logaddexp(acc, _log_pmf(i, n, p))
    return acc if acc < 0.0 else 0.0
