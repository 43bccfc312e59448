"""Scalar laws of the birth process with immigration.

Time is measured in units of the per-capita birth rate, so every family
grows as a rate-1 Yule process and only the immigration rate ``theta``
remains as a parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

__all__ = [
    "ModelParams",
    "LogSeriesLaw",
    "family_size_pmf",
    "family_transition_pmf",
    "family_pgf",
    "phi_integral",
    "population_size_pmf",
    "expected_population_size",
    "family_count_mean",
    "log_series_pmf",
    "polylog",
]

DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Immigration rate of the process (births occur at rate 1)."""

    theta: float

    def __post_init__(self):
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise ValueError(f"theta must be a positive finite number, got {self.theta!r}")


@dataclass(frozen=True)
class LogSeriesLaw:
    """Log-series law with parameter ``q`` in (0, 1).

    ``t`` is the matching time, ``q = 1 - exp(-t)``. Build one with
    :meth:`from_time` when starting from a time horizon.
    """

    q: float
    t: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q!r}")
        object.__setattr__(self, "t", -math.log1p(-self.q))

    @classmethod
    def from_time(cls, t: float) -> "LogSeriesLaw":
        if not t > 0:
            raise ValueError(f"t must be positive, got {t!r}")
        return cls(-math.expm1(-t))


def _log_q(t):
    # log(1 - e^{-t}) without cancellation for small t
    return np.log(-np.expm1(-t))


def _check_time(t, allow_zero=True):
    t = np.asarray(t, dtype=float)
    bad = (t < 0) if allow_zero else (t <= 0)
    if np.any(bad) or np.any(np.isnan(t)):
        raise ValueError(f"time must be {'nonnegative' if allow_zero else 'positive'}, got {t}")
    return t


def _as_result(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def family_size_pmf(t, j):
    """P(B(t) = j) for a family started by a single individual.

    Geometric on {1, 2, ...} with success probability ``exp(-t)``. At
    ``t = 0`` this is the point mass at ``j = 1``.
    """
    t = _check_time(t)
    j = np.asarray(j)
    if np.any(j < 1):
        raise ValueError("family size j must be >= 1")
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = -t + (j - 1) * _log_q(t)
        out = np.where(t == 0, (j == 1).astype(float), np.exp(logp))
    return _as_result(out)


def family_transition_pmf(t, j, k):
    """P(B(t) = k | B(0) = j): the negative binomial law of j independent lines."""
    t = _check_time(t)
    j = np.asarray(j)
    k = np.asarray(k)
    if np.any(j < 1):
        raise ValueError("initial size j must be >= 1")
    if np.any(k < j):
        raise ValueError("a pure birth process cannot shrink: need k >= j")
    with np.errstate(divide="ignore", invalid="ignore"):
        log_binom = special.gammaln(k) - special.gammaln(j) - special.gammaln(k - j + 1)
        logp = log_binom - j * t + (k - j) * _log_q(t)
        out = np.where(t == 0, (k == j).astype(float), np.exp(logp))
    return _as_result(out)


def family_pgf(t, s):
    """Probability generating function E[s^B(t)] of a single-founder family."""
    t = _check_time(t)
    s = np.asarray(s, dtype=float)
    if np.any((s < 0) | (s > 1)):
        raise ValueError("s must lie in [0, 1]")
    et = np.exp(-t)
    return _as_result(et * s / (1.0 - (1.0 - et) * s))


def phi_integral(a, b, c, s):
    """Integral of ``family_pgf(c - u, s)`` over u in [a, b], in closed form."""
    if not 0 <= a <= b <= c:
        raise ValueError(f"need 0 <= a <= b <= c, got a={a}, b={b}, c={c}")
    if not 0 <= s <= 1:
        raise ValueError(f"s must lie in [0, 1], got {s}")
    # 1 - (1 - e^{-x}) s written as (1 - s) + s e^{-x}
    num = math.log((1.0 - s) + s * math.exp(-(c - b)))
    den = math.log((1.0 - s) + s * math.exp(-(c - a)))
    return num - den


def population_size_pmf(params: ModelParams, t, n):
    """P(Z(t) = n): negative binomial with generalized binomial coefficient."""
    theta = params.theta
    t = _check_time(t, allow_zero=False)
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("population size n must be >= 0")
    log_binom = special.gammaln(theta + n) - special.gammaln(theta) - special.gammaln(n + 1)
    with np.errstate(invalid="ignore"):
        logp = log_binom - theta * t + np.where(n > 0, n * _log_q(t), 0.0)
    return _as_result(np.exp(logp))


def expected_population_size(params: ModelParams, t):
    t = _check_time(t)
    return _as_result(params.theta * np.expm1(t))


def family_count_mean(params: ModelParams, t, i):
    """Mean number of families of size ``i`` at time ``t``."""
    t = _check_time(t)
    i = np.asarray(i)
    if np.any(i < 1):
        raise ValueError("family size i must be >= 1")
    return _as_result(params.theta * (-np.expm1(-t)) ** i / i)


def log_series_pmf(law: LogSeriesLaw, j):
    j = np.asarray(j)
    if np.any(j < 1):
        raise ValueError("log-series support starts at j = 1")
    # normaliser -log(1 - q), which equals law.t
    return _as_result(np.exp(j * math.log(law.q)) / (j * -math.log1p(-law.q)))


# zeta(-m) = (-1)^m B_{m+1} / (m + 1), with B_1 = -1/2
_N_EXPANSION = 40
_BERNOULLI = special.bernoulli(_N_EXPANSION + 2)
_ZETA_NONPOS = [(-1) ** m * _BERNOULLI[m + 1] / (m + 1) for m in range(_N_EXPANSION + 1)]
_ZETA_POS = {2: math.pi**2 / 6, 3: float(special.zeta(3.0))}
_SERIES_CUTOFF = 0.75


def _zeta_int(n: int) -> float:
    if n >= 2:
        return _ZETA_POS.get(n) or float(special.zeta(float(n)))
    return _ZETA_NONPOS[-n]


def _polylog_series(order: int, x: float, tol: float) -> float:
    terms = []
    xk = x
    k = 1
    while True:
        term = xk / k**order
        terms.append(term)
        # geometric tail bound: sum_{m>k} x^m / m^s < term * x / (1 - x)
        if term * x / (1.0 - x) < tol * 1e-4:
            break
        k += 1
        xk *= x
    return math.fsum(terms)


def _polylog_near_one(order: int, x: float) -> float:
    # Li_s(e^mu) = mu^{s-1}/(s-1)! (H_{s-1} - log(-mu)) + sum_{k != s-1} zeta(s-k) mu^k / k!
    mu = math.log(x)
    s = order
    harmonic = sum(1.0 / r for r in range(1, s))
    terms = [mu ** (s - 1) / math.factorial(s - 1) * (harmonic - math.log(-mu))]
    for k in range(_N_EXPANSION):
        if k == s - 1:
            continue
        terms.append(_zeta_int(s - k) * mu**k / math.factorial(k))
    return math.fsum(terms)


def polylog(order: int, x: float, tol: float = DEFAULT_TOL) -> float:
    """Polylogarithm Li_order(x) for order 2 or 3 and x in [0, 1].

    Small arguments use the defining power series with exact summation.
    Arguments above 0.75 switch to the expansion in powers of log(x),
    whose coefficients are zeta values; this keeps full accuracy up to
    and including x = 1 where the power series stalls.
    """
    if order not in (2, 3):
        raise ValueError(f"only orders 2 and 3 are supported, got {order!r}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x!r}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return _zeta_int(order)
    if x <= _SERIES_CUTOFF:
        return _polylog_series(order, x, tol)
    return _polylog_near_one(order, x)
