"""Bivariate validation statistics: Pearson r with Fisher CI, t-test p-value, OLS fit."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import InsufficientSampleError, RangeError, ShapeError, ZeroVarianceError

# Two-sided standard-normal critical values for the supported confidence levels.
Z_CRITICAL = {
    0.90: 1.6448536269514722,
    0.95: 1.959963984540054,
    0.99: 2.5758293035489004,
}

BETACF_TOL = 1e-12
BETACF_MAX_ITER = 200


def mean_std(x: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and sample (n-1) standard deviation."""
    n = len(x)
    if n < 2:
        raise InsufficientSampleError(f"need at least 2 values, got {n}")
    m = math.fsum(x) / n
    var = math.fsum((v - m) ** 2 for v in x) / (n - 1)
    return m, math.sqrt(var)


def _check_pair(x: Sequence[float], y: Sequence[float], minimum: int) -> int:
    if len(x) != len(y):
        raise ShapeError(f"series lengths differ: {len(x)} vs {len(y)}")
    if len(x) < minimum:
        raise InsufficientSampleError(f"need at least {minimum} pairs, got {len(x)}")
    return len(x)


def covariance(x: Sequence[float], y: Sequence[float]) -> float:
    n = _check_pair(x, y, 2)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    return math.fsum((a - mx) * (b - my) for a, b in zip(x, y)) / (n - 1)


def _centered_sums(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    dx = [a - mx for a in x]
    dy = [b - my for b in y]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    return sxx, syy, sxy


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    _check_pair(x, y, 3)
    sxx, syy, sxy = _centered_sums(x, y)
    if sxx == 0 or syy == 0:
        raise ZeroVarianceError("correlation is undefined for a constant series")
    r = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def fisher_ci(r: float, n: int, level: float = 0.95) -> tuple[float, float]:
    """Confidence interval for a correlation via the Fisher z-transform."""
    if n < 4:
        raise InsufficientSampleError(f"Fisher interval needs n >= 4, got {n}")
    if not (-1 < r < 1):
        raise RangeError(f"|r| must be < 1, got {r}")
    try:
        z_crit = Z_CRITICAL[level]
    except KeyError:
        raise RangeError(f"unsupported level {level}; choose from {sorted(Z_CRITICAL)}") from None
    z = math.atanh(r)
    half = z_crit / math.sqrt(n - 3)
    return math.tanh(z - half), math.tanh(z + half)


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < BETACF_TOL:
            return h
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise RangeError(f"beta parameters must be positive, got a={a}, b={b}")
    if not (0.0 <= x <= 1.0):
        raise RangeError(f"x={x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the fraction converges fast only on one side of the mean; use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise RangeError(f"degrees of freedom must be positive, got {df}")
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


def p_value(r: float, n: int) -> float:
    """Two-sided significance of a sample correlation under H0: rho = 0."""
    if n < 3:
        raise InsufficientSampleError(f"p-value needs n >= 3, got {n}")
    if not (-1 < r < 1):
        raise RangeError(f"|r| must be < 1, got {r}")
    df = n - 2
    t = r * math.sqrt(df / (1.0 - r * r))
    return min(1.0, max(0.0, student_t_two_sided(t, df)))


def ols_fit(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares line y = slope*x + intercept and its coefficient of determination."""
    n = _check_pair(x, y, 3)
    sxx, syy, sxy = _centered_sums(x, y)
    if sxx == 0:
        raise ZeroVarianceError("regression slope undefined: x is constant")
    slope = sxy / sxx
    intercept = math.fsum(y) / n - slope * math.fsum(x) / n
    if syy == 0:
        return slope, intercept, 1.0
    ss_res = math.fsum((b - (slope * a + intercept)) ** 2 for a, b in zip(x, y))
    return slope, intercept, 1.0 - ss_res / syy


@dataclass(frozen=True)
class StatsSummary:
    n: int
    r: float
    ci_low: float
    ci_high: float
    p_value: float
    covariance: float
    mean_x: float
    mean_y: float
    sd_x: float
    sd_y: float
    slope: float
    intercept: float
    r_squared: float


def bivariate_summary(x: Sequence[float], y: Sequence[float], level: float = 0.95) -> StatsSummary:
    """All bivariate-fit statistics for paired series.

    A perfect correlation (|r| = 1) has a degenerate interval [r, r] and p = 0.
    With n = 3 the interval is not defined and both bounds are NaN.
    """
    r = pearson(x, y)
    n = len(x)
    if abs(r) == 1.0:
        lo = hi = r
        p = 0.0
    else:
        lo, hi = fisher_ci(r, n, level) if n >= 4 else (math.nan, math.nan)
        p = p_value(r, n)
    mx, sx = mean_std(x)
    my, sy = mean_std(y)
    slope, intercept, r2 = ols_fit(x, y)
    return StatsSummary(
        n=n, r=r, ci_low=lo, ci_high=hi, p_value=p,
        covariance=covariance(x, y),
        mean_x=mx, mean_y=my, sd_x=sx, sd_y=sy,
        slope=slope, intercept=intercept, r_squared=r2,
    )
