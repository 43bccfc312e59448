"""Event-driven simulation of the Yule process with immigration.

At population size ``z`` the next event arrives after an Exponential(theta + z)
wait. It is an immigration (founding a new family) with probability
``theta / (theta + z)``, and otherwise a birth whose parent is a uniformly
chosen individual. Intervals are half-open ``(lo, hi]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numba
import numpy as np

from .distributions import ModelParams, expected_population_size, population_size_pmf
from .esf import CRPState, counts_of_counts, crp_joint_law, crp_step, _crp_labels
from .interval_analytics import TimeGrid
from .stats import normalize_counts, total_variation

__all__ = [
    "SimulationGuardError",
    "HorizonGuardError",
    "AcceptanceGuardError",
    "Family",
    "BIRealization",
    "IntervalCounts",
    "JumpChainRecord",
    "GapSample",
    "EmbeddingReport",
    "replicate_rng",
    "simulate",
    "simulate_via_jump_chain",
    "simulate_yule",
    "interval_counts",
    "unobservable_count",
    "observable_from_count",
    "jump_chain",
    "embedding_acceptance",
    "conditioned_embedding_check",
    "sample_gap_time",
]

DEFAULT_EVENT_CAP = 1e7
MIN_ACCEPTANCE = 1e-6
EMBEDDING_CAP = 8


class SimulationGuardError(RuntimeError):
    """A run was refused because its cost would be unreasonable."""


class HorizonGuardError(SimulationGuardError):
    pass


class AcceptanceGuardError(SimulationGuardError):
    pass


def replicate_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for replicate ``index`` of a run seeded by ``master_seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(index,))))


@numba.njit(cache=True, nogil=True)
def _event_loop(rng, theta, horizon, max_pop):
    """Event times and family labels (in time order) up to ``horizon``.

    Stops early once the population reaches ``max_pop``; the second
    return value is then True.
    """
    cap = 64
    times = np.empty(cap, np.float64)
    fam = np.empty(cap, np.int64)
    t = 0.0
    z = 0
    n_fam = 0
    overflow = False
    while True:
        rate = theta + z
        t += rng.standard_exponential() / rate
        if t > horizon:
            break
        if z == cap:
            cap *= 2
            new_times = np.empty(cap, np.float64)
            new_fam = np.empty(cap, np.int64)
            new_times[:z] = times[:z]
            new_fam[:z] = fam[:z]
            times = new_times
            fam = new_fam
        if rng.random() * rate < theta:
            label = n_fam
            n_fam += 1
        else:
            label = fam[rng.integers(0, z)]
        times[z] = t
        fam[z] = label
        z += 1
        if z >= max_pop:
            overflow = True
            break
    return times[:z], fam[:z], n_fam, overflow


@numba.njit(cache=True, nogil=True)
def _grid_kernel(rng, theta, cuts):
    """Simulate to the last cut and return (S, K, Z at cuts, number of events)."""
    p = cuts.shape[0] - 1
    times, fam, n_fam, _ = _event_loop(rng, theta, cuts[p], np.iinfo(np.int64).max)
    obs = np.zeros((n_fam, p), np.bool_)
    z_cuts = np.zeros(p + 1, np.int64)
    k = 1
    for e in range(times.shape[0]):
        while times[e] > cuts[k]:
            k += 1
        obs[fam[e], k - 1] = True
        z_cuts[k] += 1
    for i in range(1, p + 1):
        z_cuts[i] += z_cuts[i - 1]
    S = np.zeros(p, np.int64)
    K = np.zeros((p, p), np.int64)
    for f in range(n_fam):
        for i in range(p):
            if obs[f, i]:
                S[i] += 1
                for j in range(i + 1, p):
                    if obs[f, j]:
                        K[i, j] += 1
    for i in range(p):
        for j in range(i + 1, p):
            K[j, i] = K[i, j]
        K[i, i] = S[i]
    return S, K, z_cuts, times.shape[0]


@numba.njit(cache=True, nogil=True)
def _conditioned_kernel(rng, theta, cuts, targets, n_accept, max_proposals):
    """Rejection sampler on {Z(t_i) = l_i for all i}.

    Returns counts-of-counts at every cut for the accepted runs, shaped
    (n_accept, p, l_p), plus the number of proposals used.
    """
    p = cuts.shape[0] - 1
    lmax = targets[p - 1]
    out = np.zeros((n_accept, p, max(lmax, 1)), np.int64)
    got = 0
    proposals = 0
    while got < n_accept and proposals < max_proposals:
        proposals += 1
        times, fam, n_fam, overflow = _event_loop(rng, theta, cuts[p], lmax + 1)
        if overflow:
            continue
        ok = True
        k = 0
        for i in range(p):
            while k < times.shape[0] and times[k] <= cuts[i + 1]:
                k += 1
            if k != targets[i]:
                ok = False
                break
        if not ok:
            continue
        sizes = np.zeros(max(n_fam, 1), np.int64)
        e = 0
        for i in range(p):
            while e < targets[i]:
                sizes[fam[e]] += 1
                e += 1
            for f in range(n_fam):
                if sizes[f] > 0:
                    out[got, i, sizes[f] - 1] += 1
        got += 1
    return out[:got], proposals


@dataclass(frozen=True)
class Family:
    founding_time: float
    birth_times: np.ndarray  # sorted, founding event first

    def size_at(self, t: float) -> int:
        return int(np.searchsorted(self.birth_times, t, side="right"))


@dataclass(frozen=True)
class BIRealization:
    families: tuple
    horizon: float

    @classmethod
    def from_events(cls, times: np.ndarray, labels: np.ndarray, horizon: float) -> "BIRealization":
        if labels.size == 0:
            return cls((), horizon)
        order = np.argsort(labels, kind="stable")
        bounds = np.flatnonzero(np.diff(labels[order])) + 1
        families = []
        for chunk in np.split(order, bounds):
            bt = np.asarray(times[chunk], dtype=float)
            families.append(Family(float(bt[0]), bt))
        families.sort(key=lambda f: f.founding_time)
        return cls(tuple(families), horizon)

    def events(self) -> tuple:
        """All births in time order as ``(times, family_index)``."""
        if not self.families:
            return np.empty(0), np.empty(0, dtype=np.int64)
        times = np.concatenate([f.birth_times for f in self.families])
        labels = np.concatenate([np.full(f.birth_times.size, i) for i, f in enumerate(self.families)])
        order = np.argsort(times, kind="stable")
        return times[order], labels[order]

    def population_at(self, t: float) -> int:
        return sum(f.size_at(t) for f in self.families)

    def family_sizes_at(self, t: float) -> list:
        return [s for s in (f.size_at(t) for f in self.families) if s > 0]


@dataclass(frozen=True)
class IntervalCounts:
    """Observability counts on a grid.

    ``K[i, j]`` counts families seen in both intervals i and j,
    ``T[i, j]`` those seen in i but not in j, and ``Z`` the population at
    every cut (``Z[0] = 0``).
    """

    S: np.ndarray
    K: np.ndarray
    T: np.ndarray
    Z: np.ndarray


class JumpChainRecord(NamedTuple):
    counts: list  # counts[n - 1] is the counts-of-counts of the first n individuals


class GapSample(NamedTuple):
    N: int
    W: float


def _check_horizon(params: ModelParams, horizon: float, max_expected_events: float):
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    expected = expected_population_size(params, horizon)
    if expected > max_expected_events:
        raise HorizonGuardError(
            f"expected number of events theta (e^T - 1) = {expected:.3g} at horizon {horizon} "
            f"exceeds the cap {max_expected_events:.3g}"
        )


def simulate(
    params: ModelParams,
    horizon: float,
    rng: np.random.Generator,
    max_expected_events: float = DEFAULT_EVENT_CAP,
) -> BIRealization:
    _check_horizon(params, horizon, max_expected_events)
    times, labels, _, _ = _event_loop(rng, float(params.theta), float(horizon), np.iinfo(np.int64).max)
    return BIRealization.from_events(times, labels, horizon)


def simulate_via_jump_chain(params: ModelParams, horizon: float, rng: np.random.Generator) -> BIRealization:
    """Same law as :func:`simulate`, built the other way round.

    The population size is run as a pure birth chain with rates theta + z,
    and the individual added at each jump joins a family chosen by the
    Chinese restaurant process.
    """
    _check_horizon(params, horizon, DEFAULT_EVENT_CAP)
    theta = params.theta
    times = []
    state = CRPState()
    labels = []
    t = 0.0
    while True:
        t += rng.exponential(1.0 / (theta + state.arrivals_so_far))
        if t > horizon:
            break
        before = len(state.family_sizes)
        old_sizes = state.family_sizes
        state = crp_step(state, params, rng)
        if len(state.family_sizes) > before:
            labels.append(before)
        else:
            labels.append(next(i for i, (a, b) in enumerate(zip(old_sizes, state.family_sizes)) if a != b))
        times.append(t)
    return BIRealization.from_events(np.array(times), np.array(labels, dtype=np.int64), horizon)


def simulate_yule(t: float, rng: np.random.Generator, founders: int = 1) -> np.ndarray:
    """Birth times in (0, t] of a rate-1 Yule process started from ``founders`` individuals."""
    if founders < 1:
        raise ValueError("need at least one founder")
    births = []
    z = founders
    clock = 0.0
    while True:
        clock += rng.standard_exponential() / z
        if clock > t:
            return np.array(births)
        births.append(clock)
        z += 1


def _observed_in(real: BIRealization, lo: float, hi: float) -> np.ndarray:
    # family has a birth in (lo, hi]
    return np.array(
        [np.searchsorted(f.birth_times, hi, "right") > np.searchsorted(f.birth_times, lo, "right") for f in real.families],
        dtype=bool,
    )


def interval_counts(real: BIRealization, grid: TimeGrid) -> IntervalCounts:
    if grid.horizon > real.horizon:
        raise ValueError(f"grid reaches {grid.horizon} beyond the simulated horizon {real.horizon}")
    p = grid.p
    obs = np.zeros((len(real.families), p), dtype=bool)
    for i, iv in enumerate(grid.intervals):
        obs[:, i] = _observed_in(real, iv.lo, iv.hi)
    hit = obs.astype(np.int64)
    miss = (~obs).astype(np.int64)
    Z = np.array([real.population_at(t) for t in grid.cuts], dtype=np.int64)
    return IntervalCounts(S=hit.sum(axis=0), K=hit.T @ hit, T=hit.T @ miss, Z=Z)


def _founded_in(real: BIRealization, J) -> np.ndarray:
    lo, hi = J
    return np.array([lo < f.founding_time <= hi for f in real.families], dtype=bool)


def unobservable_count(real: BIRealization, J, *intervals) -> int:
    """Families founded in J with no birth in any of the given intervals."""
    mask = _founded_in(real, J)
    for lo, hi in intervals:
        mask &= ~_observed_in(real, lo, hi)
    return int(mask.sum())


def observable_from_count(real: BIRealization, J, *intervals) -> int:
    """Families founded in J with a birth in every one of the given intervals."""
    mask = _founded_in(real, J)
    for lo, hi in intervals:
        mask &= _observed_in(real, lo, hi)
    return int(mask.sum())


def jump_chain(real: BIRealization, n: int) -> JumpChainRecord:
    """Counts-of-counts after each of the first ``n`` individuals, ignoring family age."""
    times, labels = real.events()
    if n < 1:
        raise ValueError("n must be >= 1")
    if times.size < n:
        raise ValueError(f"realization holds only {times.size} individuals, need {n}")
    sizes = np.zeros(len(real.families), dtype=np.int64)
    cc = np.zeros(n + 1, dtype=np.int64)
    record = []
    for k in range(n):
        f = labels[k]
        if sizes[f]:
            cc[sizes[f]] -= 1
        sizes[f] += 1
        cc[sizes[f]] += 1
        record.append(tuple(int(c) for c in cc[1 : k + 2]))
    return JumpChainRecord(record)


def embedding_acceptance(params: ModelParams, grid: TimeGrid, target_l: Sequence[int]) -> float:
    """P(Z(t_1) = l_1, ..., Z(t_p) = l_p).

    From size z the population grows like a fresh process with
    immigration rate theta + z, so each increment is negative binomial.
    """
    prob = 1.0
    prev_t, prev_l = 0.0, 0
    for t, l in zip(grid.cuts[1:], target_l):
        prob *= float(population_size_pmf(ModelParams(params.theta + prev_l), t - prev_t, l - prev_l))
        prev_t, prev_l = t, l
    return prob


@dataclass
class EmbeddingReport:
    target_l: tuple
    cuts: tuple
    accepted: int
    proposals: int
    acceptance_rate: float
    exact_acceptance: float
    tv_vs_crp_simulation: float
    tv_vs_crp_exact: float
    counts: dict

    def to_dict(self) -> dict:
        def key(hist):
            return "|".join(",".join(map(str, c)) for c in hist)

        return {
            "target_l": list(self.target_l),
            "cuts": list(self.cuts),
            "accepted": self.accepted,
            "proposals": self.proposals,
            "acceptance_rate": self.acceptance_rate,
            "exact_acceptance": self.exact_acceptance,
            "tv_vs_crp_simulation": self.tv_vs_crp_simulation,
            "tv_vs_crp_exact": self.tv_vs_crp_exact,
            "counts": {key(k): v for k, v in sorted(self.counts.items())},
        }


def conditioned_embedding_check(
    params: ModelParams,
    grid: TimeGrid,
    target_l: Sequence[int],
    replicates: int,
    rng: np.random.Generator,
    max_proposals: Optional[int] = None,
) -> EmbeddingReport:
    """Compare the BI family-size counts at the cuts, given Z(t_i) = l_i, with the CRP.

    ``replicates`` is the number of accepted trajectories. The CRP side is
    both simulated (same number of runs) and enumerated exactly.
    """
    target = tuple(int(l) for l in target_l)
    if len(target) != grid.p:
        raise ValueError(f"need one target per cut: grid has {grid.p}, got {len(target)}")
    if target[0] < 0 or any(b < a for a, b in zip(target, target[1:])):
        raise ValueError(f"targets must be nondecreasing and nonnegative: {target}")
    if target[-1] > EMBEDDING_CAP:
        raise ValueError(f"l_p = {target[-1]} exceeds the enumeration cap {EMBEDDING_CAP}")
    exact_acc = embedding_acceptance(params, grid, target)
    if exact_acc < MIN_ACCEPTANCE:
        raise AcceptanceGuardError(
            f"conditioning event has probability {exact_acc:.3g} < {MIN_ACCEPTANCE:g}; choose the grid closer to "
            "the Fisher grid or smaller targets"
        )
    if max_proposals is None:
        max_proposals = int(50 * replicates / exact_acc) + 1000
    out, proposals = _conditioned_kernel(
        rng, float(params.theta), np.asarray(grid.cuts), np.asarray(target, dtype=np.int64), replicates, max_proposals
    )
    counts = {}
    for sample in out:
        hist = tuple(tuple(int(c) for c in sample[i, :l]) for i, l in enumerate(target))
        counts[hist] = counts.get(hist, 0) + 1
    accepted = out.shape[0]
    if accepted == 0:
        raise AcceptanceGuardError(f"no trajectory accepted in {proposals} proposals")

    crp_counts = {}
    for _ in range(replicates):
        owner = _crp_labels(params.theta, target[-1], rng)
        hist = []
        for l in target:
            sizes = np.bincount(owner[:l]) if l else []
            hist.append(counts_of_counts(sizes, l))
        hist = tuple(hist)
        crp_counts[hist] = crp_counts.get(hist, 0) + 1

    empirical = normalize_counts(counts)
    return EmbeddingReport(
        target_l=target,
        cuts=grid.cuts,
        accepted=accepted,
        proposals=int(proposals),
        acceptance_rate=accepted / proposals,
        exact_acceptance=exact_acc,
        tv_vs_crp_simulation=total_variation(empirical, normalize_counts(crp_counts)),
        tv_vs_crp_exact=total_variation(empirical, crp_joint_law(params, target)),
        counts=counts,
    )


def sample_gap_time(params: ModelParams, t: float, rng: np.random.Generator) -> Optional[GapSample]:
    """Size at ``t`` of a uniformly chosen family founded in (0, t], and its wait to the next birth.

    Returns None when no family has arrived by ``t``.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    _check_horizon(params, t, DEFAULT_EVENT_CAP)
    _, labels, n_fam, _ = _event_loop(rng, float(params.theta), float(t), np.iinfo(np.int64).max)
    if n_fam == 0:
        return None
    chosen = rng.integers(n_fam)
    size = int(np.count_nonzero(labels == chosen))
    # each member waits an independent unit exponential time for its next birth
    wait = float(rng.standard_exponential(size).min())
    return GapSample(size, wait)
