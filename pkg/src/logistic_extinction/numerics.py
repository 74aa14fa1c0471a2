"""Shared log-space numerical helpers.

Probabilities and expectations in this package routinely span hundreds of
orders of magnitude (the rate-ratio products grow like exp(n * barrier)),
so sums and ratios are carried in log scale throughout.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["logsumexp", "logcumsumexp", "log1mexp", "kahan_cumsum"]


def logsumexp(a) -> float:
    """log(sum(exp(a))) with max-shifting; empty or all -inf input gives -inf."""
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return -np.inf
    m = np.max(a)
    if not np.isfinite(m):
        # +inf propagates, -inf means an identically zero sum
        return float(m)
    return float(m + np.log(np.sum(np.exp(a - m))))


def logcumsumexp(a) -> np.ndarray:
    """Running log(sum(exp(...))) prefix, stable via pairwise logaddexp."""
    a = np.asarray(a, dtype=np.float64)
    return np.logaddexp.accumulate(a)


def log1mexp(x: float) -> float:
    """log(1 - exp(x)) for x <= 0, accurate near both endpoints."""
    if x >= 0.0:
        if x == 0.0:
            return -np.inf
        raise ValueError("log1mexp requires x <= 0")
    if x < -0.693147180559945:  # log(1/2)
        return float(np.log1p(-np.exp(x)))
    return float(np.log(-np.expm1(x)))


@njit(cache=True)
def _kahan(a):
    out = np.empty_like(a)
    s = 0.0
    c = 0.0
    for i in range(a.shape[0]):
        y = a[i] - c
        t = s + y
        c = (t - s) - y
        s = t
        out[i] = s
    return out


def kahan_cumsum(a) -> np.ndarray:
    """Compensated prefix sums; keeps rounding flat over long accumulations."""
    return _kahan(np.ascontiguousarray(a, dtype=np.float64))
