"""Ewens sampling formula, the Chinese restaurant process and the Poisson
conditioning relations that realise the ESF."""

from __future__ import annotations

import math
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Tuple

import numpy as np
from scipy import special

from .distributions import ModelParams, population_size_pmf
from .interval_analytics import SampleSizes
from .stats import normalize_counts, total_variation

__all__ = [
    "CountsOfCounts",
    "ESFConstraintWarning",
    "CRPState",
    "counts_of_counts",
    "partitions",
    "log_rising_factorial",
    "esf_pmf",
    "esf_law",
    "crp_step",
    "sample_crp",
    "crp_sequential_counts",
    "crp_joint_law",
    "poisson_truncation_index",
    "conditioning_acceptance",
    "ConditioningReport",
    "conditioned_poisson_esf_check",
]

CountsOfCounts = Tuple[int, ...]

ENUMERATION_CAP = 10


class ESFConstraintWarning(UserWarning):
    """A configuration passed to the ESF does not describe a partition of n."""


def counts_of_counts(family_sizes: Sequence[int], n: int | None = None) -> CountsOfCounts:
    """``(c_1, ..., c_n)`` from a collection of family sizes; ``n`` defaults to their total."""
    sizes = [int(s) for s in family_sizes if s > 0]
    if n is None:
        n = sum(sizes)
    c = [0] * n
    for s in sizes:
        if s > n:
            raise ValueError(f"family of size {s} does not fit in length {n}")
        c[s - 1] += 1
    return tuple(c)


def _integer_partitions(n: int, largest: int) -> Iterator[list]:
    if n == 0:
        yield []
        return
    for part in range(min(n, largest), 0, -1):
        for rest in _integer_partitions(n - part, part):
            yield [part] + rest


def partitions(n: int) -> Iterator[CountsOfCounts]:
    """All counts-of-counts vectors of length n with sum_i i c_i = n."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    for parts in _integer_partitions(n, n):
        yield counts_of_counts(parts, n)


def log_rising_factorial(theta: float, n: int) -> float:
    """log of theta (theta + 1) ... (theta + n - 1)."""
    if n <= 50:
        return math.fsum(math.log(theta + k) for k in range(n))
    return float(special.gammaln(theta + n) - special.gammaln(theta))


def esf_pmf(params: ModelParams, n: int, config: Sequence[int]) -> float:
    """Ewens sampling formula probability of the counts-of-counts ``config``.

    A ``config`` that is not a partition of ``n`` has probability zero; an
    :class:`ESFConstraintWarning` is issued in that case.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    c = [int(x) for x in config]
    if any(x < 0 for x in c):
        raise ValueError("counts must be nonnegative")
    if sum((i + 1) * x for i, x in enumerate(c)) != n:
        warnings.warn(f"{tuple(c)} is not a partition of {n}", ESFConstraintWarning, stacklevel=2)
        return 0.0
    theta = params.theta
    logp = math.lgamma(n + 1) - log_rising_factorial(theta, n)
    for j, cj in enumerate(c, start=1):
        if cj:
            logp += cj * math.log(theta / j) - math.lgamma(cj + 1)
    return math.exp(logp)


def esf_law(params: ModelParams, n: int) -> dict:
    return {c: esf_pmf(params, n, c) for c in partitions(n)}


@dataclass
class CRPState:
    """Family sizes indexed by label (labels follow order of appearance)."""

    family_sizes: list = field(default_factory=list)
    arrivals_so_far: int = 0

    def __post_init__(self):
        if sum(self.family_sizes) != self.arrivals_so_far:
            raise ValueError("family sizes must add up to the number of arrivals")
        if any(s < 1 for s in self.family_sizes):
            raise ValueError("family sizes must be positive")

    def counts_of_counts(self) -> CountsOfCounts:
        return counts_of_counts(self.family_sizes, self.arrivals_so_far)


def _crp_choice(sizes: list, m: int, theta: float, rng: np.random.Generator) -> int:
    """Label joined by arrival m + 1; ``len(sizes)`` means a new family."""
    if rng.random() * (theta + m) < theta:
        return len(sizes)
    # a uniformly chosen earlier arrival, i.e. a family picked by size
    r = rng.integers(m)
    for label, s in enumerate(sizes):
        if r < s:
            return label
        r -= s
    raise AssertionError("unreachable: sizes inconsistent with arrivals")


def crp_step(state: CRPState, params: ModelParams, rng: np.random.Generator) -> CRPState:
    sizes = list(state.family_sizes)
    label = _crp_choice(sizes, state.arrivals_so_far, params.theta, rng)
    if label == len(sizes):
        sizes.append(1)
    else:
        sizes[label] += 1
    return CRPState(sizes, state.arrivals_so_far + 1)


def _crp_labels(theta: float, n: int, rng: np.random.Generator) -> list:
    # owner[k] is the family label of arrival k
    owner = []
    n_families = 0
    for m in range(n):
        if rng.random() * (theta + m) < theta:
            owner.append(n_families)
            n_families += 1
        else:
            owner.append(owner[rng.integers(m)])
    return owner


def sample_crp(params: ModelParams, n: int, rng: np.random.Generator) -> CRPState:
    """Run the CRP for ``n`` arrivals from the empty state."""
    owner = _crp_labels(params.theta, n, rng)
    sizes = [0] * (max(owner) + 1 if owner else 0)
    for label in owner:
        sizes[label] += 1
    return CRPState(sizes, n)


def crp_sequential_counts(params: ModelParams, sizes: SampleSizes, rng: np.random.Generator) -> list:
    """Distinct families represented in each consecutive batch of arrivals."""
    cum = sizes.cumulative
    owner = _crp_labels(params.theta, cum[-1], rng)
    return [len(set(owner[lo:hi])) for lo, hi in zip(cum, cum[1:])]


def crp_joint_law(params: ModelParams, checkpoints: Sequence[int]) -> dict:
    """Exact joint law of the counts-of-counts after ``l_1 <= ... <= l_p`` arrivals.

    Keys are tuples ``(C~(l_1), ..., C~(l_p))``. Transitions only depend on
    the multiset of family sizes, so the recursion runs over sorted size tuples.
    """
    checkpoints = [int(l) for l in checkpoints]
    if any(b < a for a, b in zip(checkpoints, checkpoints[1:])) or (checkpoints and checkpoints[0] < 0):
        raise ValueError("checkpoints must be nondecreasing and nonnegative")
    theta = params.theta
    states = {((), ()): 1.0}
    m = 0
    pending = list(checkpoints)
    while True:
        while pending and pending[0] == m:
            pending.pop(0)
            states_new = defaultdict(float)
            for (hist, part), pr in states.items():
                states_new[(hist + (counts_of_counts(part, m),), part)] += pr
            states = states_new
        if not pending:
            break
        nxt = defaultdict(float)
        for (hist, part), pr in states.items():
            denom = theta + m
            nxt[(hist, tuple(sorted(part + (1,))))] += pr * theta / denom
            for size, mult in Counter(part).items():
                grown = list(part)
                grown.remove(size)
                grown.append(size + 1)
                nxt[(hist, tuple(sorted(grown)))] += pr * size * mult / denom
        states = nxt
        m += 1
    law = defaultdict(float)
    for (hist, _), pr in states.items():
        law[hist] += pr
    return dict(law)


def poisson_truncation_index(theta: float, x: float, n: int, tol: float = 1e-12) -> int:
    """Smallest m >= n with sum_{i > m} theta x^i / i below ``tol``."""
    if not 0 < x < 1:
        raise ValueError("truncation needs x in (0, 1)")
    m = n
    # tail bound theta x^{m+1} / ((m + 1) (1 - x))
    while theta * x ** (m + 1) / ((m + 1) * (1 - x)) >= tol:
        m += 1
    return m


def conditioning_acceptance(params: ModelParams, x: float, n: int, variant: str = "finite") -> float:
    """Exact probability of the conditioning event T_n(x) = n or T_inf(x) = n."""
    theta = params.theta
    t = -math.log1p(-x) if x < 1 else math.inf
    if variant == "infinite":
        if not 0 < x < 1:
            raise ValueError("the infinite-sum relation needs x in (0, 1)")
        return float(population_size_pmf(params, t, n))
    if not 0 < x <= 1:
        raise ValueError("x must lie in (0, 1]")
    # P(T_n = n) = sum over partitions of prod_i Poisson(c_i; theta x^i / i)
    means = [theta * x**i / i for i in range(1, n + 1)]
    total = 0.0
    for c in partitions(n):
        logp = -sum(means)
        for mu, ci in zip(means, c):
            logp += ci * math.log(mu) - math.lgamma(ci + 1)
        total += math.exp(logp)
    return total


@dataclass
class ConditioningReport:
    n: int
    x: float
    variant: str
    tv_distance: float
    accepted: int
    proposals: int
    acceptance_rate: float
    exact_acceptance: float
    counts: dict

    @property
    def empirical(self) -> dict:
        return normalize_counts(self.counts)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "x": self.x,
            "variant": self.variant,
            "tv_distance": self.tv_distance,
            "accepted": self.accepted,
            "proposals": self.proposals,
            "acceptance_rate": self.acceptance_rate,
            "exact_acceptance": self.exact_acceptance,
            "counts": {",".join(map(str, k)): v for k, v in sorted(self.counts.items())},
        }


def conditioned_poisson_esf_check(
    params: ModelParams,
    x: float,
    n: int,
    replicates: int,
    rng: np.random.Generator,
    variant: str = "finite",
    batch: int = 200_000,
) -> ConditioningReport:
    """Rejection-sample independent Poissons conditioned on their weighted sum.

    With ``variant="finite"`` the event is ``sum_{i<=n} i pi_i = n``
    (valid for x in (0, 1]); with ``variant="infinite"`` it is the full
    sum over all i, truncated where the remaining Poisson mass is
    below 1e-12 (x in (0, 1)). Compares the accepted law of
    ``(pi_1, ..., pi_n)`` with the ESF in total variation.
    """
    if variant not in ("finite", "infinite"):
        raise ValueError(f"unknown variant {variant!r}")
    if not 1 <= n <= ENUMERATION_CAP:
        raise ValueError(f"n must lie in [1, {ENUMERATION_CAP}] for enumeration")
    if not 0 < x <= 1 or (variant == "infinite" and x >= 1):
        raise ValueError(f"x={x} outside the admissible range for the {variant} relation")
    theta = params.theta
    m = n if variant == "finite" else poisson_truncation_index(theta, x, n)
    idx = np.arange(1, m + 1)
    means = theta * x**idx / idx
    accepted = Counter()
    n_acc = 0
    proposals = 0
    while n_acc < replicates:
        draws = rng.poisson(means, size=(batch, m))
        proposals += batch
        hit = draws @ idx == n
        rows = draws[hit][:, :n]
        take = min(len(rows), replicates - n_acc)
        if take < len(rows):
            # only count proposals up to the last accepted row used
            last = np.flatnonzero(hit)[take - 1]
            proposals -= batch - (last + 1)
        for row in rows[:take]:
            accepted[tuple(int(v) for v in row)] += 1
        n_acc += take
    law = esf_law(params, n)
    tv = total_variation(normalize_counts(accepted), law)
    return ConditioningReport(
        n=n,
        x=x,
        variant=variant,
        tv_distance=tv,
        accepted=n_acc,
        proposals=proposals,
        acceptance_rate=n_acc / proposals,
        exact_acceptance=conditioning_acceptance(params, x, n, variant),
        counts=dict(accepted),
    )
