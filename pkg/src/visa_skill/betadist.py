"""Regularized incomplete beta function and its inverse.

The CDF uses the classic continued-fraction expansion evaluated with the
modified Lentz method, switching to the symmetry
``I_x(a, b) = 1 - I_{1-x}(b, a)`` on the side where the fraction converges
slowly.  The inverse is plain bisection on the monotone CDF, with closed forms
when one shape parameter equals 1.
"""

from __future__ import annotations

import math
from functools import lru_cache

_TINY = 1e-300
_EPS = 1e-16
_MAX_ITER = 10_000


def _betacf(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def _log_front(a: float, b: float, x: float) -> float:
    # log of x^a (1-x)^b / B(a, b)
    return (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
            + a * math.log(x) + b * math.log1p(-x))


def betainc(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta I_x(a, b) for x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(_log_front(a, b, x)) * _betacf(a, b, x) / a
    # mirror side: I_x(a,b) = 1 - I_{1-x}(b,a), computed with 1-x taken exactly
    y = 1.0 - x
    front = math.exp(math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                     + b * math.log(y) + a * math.log(x))
    return 1.0 - front * _betacf(b, a, y) / b


def bisect_inverse(q: float, a: float, b: float) -> float:
    """Bisection for x with I_x(a, b) = q, run until the bracket stops shrinking."""
    lo, hi = 0.0, 1.0
    for _ in range(2200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if betainc(mid, a, b) < q:
            lo = mid
        else:
            hi = mid
    f_lo, f_hi = betainc(lo, a, b), betainc(hi, a, b)
    return lo if abs(f_lo - q) < abs(f_hi - q) else hi


def beta_inverse_cdf(q: float, alpha: float, beta: float, method: str = "auto") -> float:
    """Quantile function of Beta(alpha, beta).

    ``method="auto"`` uses the closed forms for alpha == 1 or beta == 1 and
    bisection otherwise; ``method="bisect"`` always bisects.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile level q={q} outside [0, 1]")
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    if method not in ("auto", "bisect"):
        raise ValueError(f"unknown method {method!r}")
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return 1.0
    if method == "auto":
        if alpha == 1.0:
            return -math.expm1(math.log1p(-q) / beta)
        if beta == 1.0:
            return q ** (1.0 / alpha)
    return bisect_inverse(q, alpha, beta)


@lru_cache(maxsize=256)
def quantile_targets(T: int, alpha: float, beta: float) -> tuple[float, ...]:
    """F^{-1}((2i - 1) / (2T)) for i = 1..T: the evenly spaced Beta quantiles."""
    return tuple(beta_inverse_cdf((2 * i - 1) / (2 * T), alpha, beta) for i in range(1, T + 1))
