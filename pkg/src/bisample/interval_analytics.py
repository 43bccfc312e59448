"""Closed forms for families observable in sampling intervals.

A family is observable in an interval when at least one of its births
(the founding immigration included) falls inside it. All the means below
are Poisson means obtained by marking the immigration process.

Interval formulas are written in terms of ``W(lo, hi) = e^hi - e^lo`` and
evaluated in log space, so that grids reaching large times do not overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from .distributions import LogSeriesLaw, ModelParams, polylog

__all__ = [
    "Interval",
    "TimeGrid",
    "SampleSizes",
    "KTMeans",
    "FisherMoments",
    "GapMoments",
    "mean_unobservable_single",
    "mean_unobservable_double",
    "mean_observable_from",
    "mean_observable_interval",
    "kt_decomposition_means",
    "covariance_S",
    "grid_moments",
    "expected_sample_variance",
    "sample_variance_statistic",
    "log_equal_grid",
    "log_equal_correlation",
    "watterson_estimator",
    "theta_s_variance",
    "theta_s_variance_limit",
    "fisher_grid",
    "fisher_moments",
    "fisher_asymptotics",
    "gap_time_density",
    "gap_time_density_series",
    "gap_time_moments",
]


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not 0 <= self.lo < self.hi:
            raise ValueError(f"need 0 <= lo < hi, got ({self.lo}, {self.hi})")

    def __iter__(self):
        yield self.lo
        yield self.hi


IntervalLike = Union[Interval, Sequence[float]]


@dataclass(frozen=True)
class TimeGrid:
    """Cut points ``0 = t_0 < t_1 < ... < t_p``."""

    cuts: tuple

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.cuts)
        if len(cuts) < 2:
            raise ValueError("a grid needs at least two cut points")
        if cuts[0] != 0.0:
            raise ValueError(f"first cut must be 0, got {cuts[0]}")
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ValueError(f"cuts must be strictly increasing: {cuts}")
        object.__setattr__(self, "cuts", cuts)

    @property
    def p(self) -> int:
        return len(self.cuts) - 1

    @property
    def horizon(self) -> float:
        return self.cuts[-1]

    @property
    def intervals(self) -> list:
        return [Interval(a, b) for a, b in zip(self.cuts, self.cuts[1:])]

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.cuts)


@dataclass(frozen=True)
class SampleSizes:
    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        if not sizes:
            raise ValueError("need at least one sample size")
        if any(n < 1 for n in sizes):
            raise ValueError(f"sample sizes must be positive integers: {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def p(self) -> int:
        return len(self.sizes)

    @property
    def cumulative(self) -> tuple:
        """``(l_0, l_1, ..., l_p)`` with ``l_0 = 0``."""
        return (0,) + tuple(int(x) for x in np.cumsum(self.sizes))


class KTMeans(NamedTuple):
    K: float
    T12: float
    T21: float


class FisherMoments(NamedTuple):
    means: np.ndarray
    cov: np.ndarray
    ev: float


class GapMoments(NamedTuple):
    mean: float
    second_moment: float
    variance: float
    # Li_3(q)/t, the expression printed alongside the mean in the source
    # derivation; kept for comparison against the mixture variance
    stated_variance: float


def _endpoints(interval) -> tuple:
    lo, hi = (float(x) for x in interval)
    if not 0 <= lo <= hi:
        raise ValueError(f"need 0 <= lo <= hi, got ({lo}, {hi})")
    return lo, hi


def _ordered_pair(first, second) -> tuple:
    a, b = _endpoints(first)
    c, d = _endpoints(second)
    if b > c:
        raise ValueError(f"intervals must be disjoint and ordered: ({a}, {b}) then ({c}, {d})")
    return a, b, c, d


def _log_width(lo: float, hi: float) -> float:
    """log(e^hi - e^lo)."""
    if hi == lo:
        return -math.inf
    return hi + math.log(-math.expm1(lo - hi))


def _logsum(*logs: float) -> float:
    return float(np.logaddexp.reduce(np.array(logs, dtype=float)))


def _log_width_plus_one(lo: float, hi: float) -> float:
    """log(e^hi - e^lo + 1)."""
    return _logsum(_log_width(lo, hi), 0.0)


def mean_unobservable_single(params: ModelParams, J: IntervalLike, I: IntervalLike) -> float:
    """Mean number of families founded in J with no birth in the later interval I."""
    a, b, c, d = _ordered_pair(J, I)
    if a == b:
        return 0.0
    wi = _log_width(c, d)
    return params.theta * (_logsum(wi, b) - _logsum(wi, a))


def mean_unobservable_double(params: ModelParams, a: float, b: float, c: float, d: float) -> float:
    """Mean number of families founded in (0, a) unobservable in both (a, b) and (c, d)."""
    _ordered_pair((a, b), (c, d))
    if a == 0:
        return 0.0
    w2 = _log_width(c, d)
    w1 = _log_width(a, b)
    return params.theta * (_logsum(w2, b) - _logsum(w2, w1, 0.0))


def mean_observable_from(params: ModelParams, J: IntervalLike, I: IntervalLike) -> float:
    """Mean number of families founded in J that are observable in the later interval I."""
    a, b, c, d = _ordered_pair(J, I)
    if a == b:
        return 0.0
    wi = _log_width(c, d)
    return params.theta * ((b - a) + _logsum(wi, a) - _logsum(wi, b))


def mean_observable_interval(params: ModelParams, I: IntervalLike) -> float:
    """E S(a, b) = theta log(e^b - e^a + 1)."""
    a, b = _endpoints(I)
    return params.theta * _log_width_plus_one(a, b)


def kt_decomposition_means(params: ModelParams, I1: IntervalLike, I2: IntervalLike) -> KTMeans:
    """Means of the families seen in both intervals (K) or only in one (T12, T21)."""
    a, b, c, d = _ordered_pair(I1, I2)
    l1 = _log_width_plus_one(a, b)
    l2 = _log_width_plus_one(c, d)
    l12 = _logsum(_log_width(a, b), _log_width(c, d), 0.0)
    th = params.theta
    return KTMeans(K=th * (l1 + l2 - l12), T12=th * (l12 - l2), T21=th * (l12 - l1))


def covariance_S(params: ModelParams, I1: IntervalLike, I2: IntervalLike) -> float:
    """Cov(S(I1), S(I2)) for disjoint ordered intervals."""
    a, b, c, d = _ordered_pair(I1, I2)
    w1 = _log_width(a, b)
    w2 = _log_width(c, d)
    log_num = _logsum(w1, 0.0) + _logsum(w2, 0.0)
    return params.theta * (log_num - _logsum(w1, w2, 0.0))


def grid_moments(params: ModelParams, grid: TimeGrid) -> tuple:
    """Means and covariance matrix of (S_1, ..., S_p); the diagonal is the Poisson variance."""
    ivs = grid.intervals
    means = np.array([mean_observable_interval(params, iv) for iv in ivs])
    cov = np.diag(means)
    for i in range(grid.p):
        for j in range(i + 1, grid.p):
            cov[i, j] = cov[j, i] = covariance_S(params, ivs[i], ivs[j])
    return means, cov


def expected_sample_variance(params: ModelParams, grid: TimeGrid) -> float:
    p = grid.p
    if p < 2:
        raise ValueError("the sample variance needs at least two intervals")
    th = params.theta
    cuts = grid.cuts
    logw = [_log_width(a, b) for a, b in zip(cuts, cuts[1:])]
    lw1 = [_logsum(w, 0.0) for w in logw]
    total = []
    for i in range(p):
        for j in range(i + 1, p):
            l_ij = _logsum(logw[i], logw[j], 0.0)
            total.append(th * (2 * l_ij - lw1[i] - lw1[j]) + th**2 * (lw1[i] - lw1[j]) ** 2)
    return math.fsum(total) / (p * (p - 1))


def sample_variance_statistic(counts) -> float:
    """V_p = sum_{i<j} (S_i - S_j)^2 / (p (p - 1)) for one vector of counts."""
    s = np.asarray(counts, dtype=float)
    p = s.shape[-1]
    if p < 2:
        raise ValueError("need at least two counts")
    diffs = s[..., :, None] - s[..., None, :]
    return np.triu(diffs**2, 1).sum(axis=(-2, -1)) / (p * (p - 1))


def log_equal_grid(gamma: float, p: int) -> TimeGrid:
    """Cuts with e^{t_i} = i gamma + 1, making every E S_i equal."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return TimeGrid(tuple(math.log1p(i * gamma) for i in range(p + 1)))


def log_equal_correlation(gamma: float) -> float:
    """Correlation of two distinct S_i under the log-equal design."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return 2.0 - math.log1p(2 * gamma) / math.log1p(gamma)


def watterson_estimator(observations, gamma: float) -> float:
    obs = np.asarray(observations, dtype=float)
    if obs.size == 0:
        raise ValueError("need at least one observation")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return float(obs.mean() / math.log1p(gamma))


def theta_s_variance(params: ModelParams, gamma: float, p: int) -> float:
    """Exact variance of the moment estimator under the log-equal design."""
    rho = log_equal_correlation(gamma)
    return params.theta / (p * math.log1p(gamma)) * (1 + (p - 1) * rho)


def theta_s_variance_limit(params: ModelParams, gamma: float) -> float:
    """p -> infinity limit of :func:`theta_s_variance`; positive, so no consistency."""
    return params.theta * log_equal_correlation(gamma) / math.log1p(gamma)


def fisher_grid(params: ModelParams, sizes: SampleSizes) -> TimeGrid:
    """Cuts solving E Z(t_i) = l_i."""
    th = params.theta
    return TimeGrid(tuple(math.log1p(l / th) for l in sizes.cumulative))


def fisher_moments(params: ModelParams, sizes: SampleSizes) -> FisherMoments:
    """Means, covariances and E V_p of the counts on the Fisher grid.

    Uses the simplified forms in the sample sizes rather than going
    through the grid, which avoids cancellation for large samples.
    """
    p = sizes.p
    if p < 2:
        raise ValueError("covariances and the sample variance need p >= 2")
    th = params.theta
    n = np.array(sizes.sizes, dtype=float)
    means = th * np.log1p(n / th)
    cov = np.diag(means)
    terms = []
    for i in range(p):
        for j in range(i + 1, p):
            ni, nj = n[i], n[j]
            # (th+ni)(th+nj) = th (th+ni+nj) + ni nj
            cov[i, j] = cov[j, i] = th * math.log1p(ni * nj / (th * (th + ni + nj)))
            log_ratio = math.log1p(ni / th) - math.log1p(nj / th)
            lin = 2 * math.log(th + ni + nj) - math.log(th + ni) - math.log(th + nj)
            terms.append(th * lin + th**2 * log_ratio**2)
    return FisherMoments(means=means, cov=cov, ev=math.fsum(terms) / (p * (p - 1)))


def fisher_asymptotics(params: ModelParams, proportions) -> float:
    """Large-sample limit of E V_p when n_i = q_i n."""
    q = np.asarray(proportions, dtype=float)
    if q.ndim != 1 or q.size < 2:
        raise ValueError("need at least two proportions")
    if np.any(q <= 0):
        raise ValueError("proportions must be positive")
    if abs(q.sum() - 1.0) > 1e-12:
        raise ValueError(f"proportions must sum to 1, got {q.sum()!r}")
    q = q / q.sum()
    th = params.theta
    p = q.size
    terms = []
    for i in range(p):
        for j in range(i + 1, p):
            terms.append(
                th * math.log((q[i] + q[j]) ** 2 / (q[i] * q[j])) + th**2 * math.log(q[i] / q[j]) ** 2
            )
    return math.fsum(terms) / (p * (p - 1))


def gap_time_density(t: float, s):
    """Density of the wait after ``t`` until a randomly chosen family's next birth."""
    law = LogSeriesLaw.from_time(t)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("s must be positive")
    x = law.q * np.exp(-s)
    out = x / (1.0 - x) / float(t)
    return float(out) if out.ndim == 0 else out


def gap_time_density_series(t: float, s, tol: float = 1e-15):
    """Mixture-of-exponentials form of :func:`gap_time_density`, summed term by term."""
    law = LogSeriesLaw.from_time(t)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    norm = float(t)
    out = np.empty_like(s)
    for idx, si in enumerate(s):
        x = law.q * math.exp(-si)
        terms = []
        n = 1
        while True:
            # (q^n / n) * n e^{-s n} / norm
            term = x**n / norm
            terms.append(term)
            if term * x / (1.0 - x) < tol:
                break
            n += 1
        out[idx] = math.fsum(terms)
    return float(out[0]) if out.size == 1 else out


def gap_time_moments(t: float) -> GapMoments:
    law = LogSeriesLaw.from_time(t)
    # -log(1 - q) is t itself; using it avoids the rounding in q near 1
    norm = float(t)
    li2 = polylog(2, law.q)
    li3 = polylog(3, law.q)
    mean = li2 / norm
    # W | N = n is Exponential(n), so E[W^2 | N = n] = 2 / n^2
    second = 2.0 * li3 / norm
    return GapMoments(mean=mean, second_moment=second, variance=second - mean**2, stated_variance=li3 / norm)
