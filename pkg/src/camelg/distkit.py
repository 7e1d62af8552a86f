"""Tail probabilities for the normal, chi-square, Student t and F distributions.

Chi-square tails come from the regularized incomplete gamma function, t and F
tails from the regularized incomplete beta function. Both use a power series
near the origin and a modified Lentz continued fraction elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "NonFiniteInput",
    "TestStatistic",
    "chi2_sf",
    "f_sf",
    "gammainc_lower",
    "gammainc_upper",
    "betainc",
    "norm_cdf",
    "norm_sf",
    "p_value",
    "t_quantile",
    "t_sf",
]

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000

DISTRIBUTIONS = ("normal", "chi_square", "student_t", "F")
TAILS = ("two_sided", "upper", "lower")


class NonFiniteInput(ValueError):
    pass


def _series_gamma(a: float, x: float) -> float:
    # P(a, x) = x^a e^-x / Gamma(a+1) * sum x^n / ((a+1)...(a+n))
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _cf_gamma(a: float, x: float) -> float:
    # Q(a, x) via Legendre continued fraction, modified Lentz
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma ``P(a, x)``."""
    if x <= 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return _series_gamma(a, x)
    return 1.0 - _cf_gamma(a, x)


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(a, x) = 1 - P(a, x)``."""
    if x <= 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return 1.0 - _series_gamma(a, x)
    return _cf_gamma(a, x)


def _cf_beta(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
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
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _cf_beta(a, b, x) / a
    return 1.0 - front * _cf_beta(b, a, 1.0 - x) / b


def norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def chi2_sf(x: float, df: float) -> float:
    return gammainc_upper(0.5 * df, 0.5 * x)


def _upper_beta_tail(a: float, b: float, x: float) -> float:
    # 1 - I_x(a, b) = I_{1-x}(b, a), evaluated without cancellation
    return betainc(b, a, 1.0 - x)


def t_sf(t: float, df: float) -> float:
    """Upper tail ``P(T > t)`` of Student's t."""
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    x = df / (df + t * t)
    half = 0.5 * betainc(0.5 * df, 0.5, x)
    return half if t >= 0 else 1.0 - half


def f_sf(f: float, df1: float, df2: float) -> float:
    """Upper tail ``P(F > f)``."""
    if f <= 0.0:
        return 1.0
    if math.isinf(f):
        return 0.0
    x = df2 / (df2 + df1 * f)
    return betainc(0.5 * df2, 0.5 * df1, x)


@dataclass(frozen=True)
class TestStatistic:
    """A test statistic together with its reference distribution.

    ``df`` holds ``()`` for the normal, ``(k,)`` for chi-square and t, and
    ``(d1, d2)`` for F.
    """

    __test__ = False  # keep pytest from collecting this class

    value: float
    distribution: str = "normal"
    df: tuple = ()
    tail: str = "upper"

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.tail not in TAILS:
            raise ValueError(f"unknown tail {self.tail!r}")
        need = {"normal": 0, "chi_square": 1, "student_t": 1, "F": 2}[self.distribution]
        df = tuple(self.df) if isinstance(self.df, (tuple, list)) else (self.df,)
        if len(df) != need:
            raise ValueError(f"{self.distribution} takes {need} degree(s) of freedom")
        if any(not (d > 0) for d in df):
            raise ValueError("degrees of freedom must be positive")
        object.__setattr__(self, "df", df)

    @property
    def p_value(self) -> float:
        return p_value(self)


def _cdf_sf(stat: TestStatistic) -> tuple[float, float]:
    v = stat.value
    if stat.distribution == "normal":
        return norm_cdf(v), norm_sf(v)
    if stat.distribution == "chi_square":
        k = stat.df[0]
        return gammainc_lower(0.5 * k, 0.5 * v), chi2_sf(v, k)
    if stat.distribution == "student_t":
        up = t_sf(v, stat.df[0])
        low = t_sf(-v, stat.df[0])
        return low, up
    d1, d2 = stat.df
    if v <= 0.0:
        return 0.0, 1.0
    x = d1 * v / (d1 * v + d2)
    return betainc(0.5 * d1, 0.5 * d2, x), f_sf(v, d1, d2)


def p_value(stat: TestStatistic) -> float:
    """Tail probability of ``stat`` under its reference distribution."""
    if not math.isfinite(stat.value):
        raise NonFiniteInput(f"statistic {stat.value!r} is not finite")
    low, up = _cdf_sf(stat)
    if stat.tail == "upper":
        p = up
    elif stat.tail == "lower":
        p = low
    else:
        if stat.distribution in ("normal", "student_t"):
            p = 2.0 * (up if stat.value >= 0 else low)
        else:
            p = 2.0 * min(low, up)
    return min(max(p, 0.0), 1.0)


def t_quantile(q: float, df: float) -> float:
    """Quantile of Student's t by bisection on :func:`t_sf`."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    target = 1.0 - q
    lo, hi = -1.0, 1.0
    while t_sf(lo, df) < target:
        lo *= 2.0
    while t_sf(hi, df) > target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_sf(mid, df) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)
