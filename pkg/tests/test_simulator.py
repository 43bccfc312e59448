import math
from collections import Counter

import numpy as np
import pytest

from bisample.distributions import ModelParams, population_size_pmf
from bisample.esf import esf_law
from bisample.interval_analytics import (
    TimeGrid,
    fisher_grid,
    SampleSizes,
    mean_observable_from,
    mean_unobservable_double,
    mean_unobservable_single,
)
from bisample.simulator import (
    AcceptanceGuardError,
    BIRealization,
    HorizonGuardError,
    conditioned_embedding_check,
    embedding_acceptance,
    interval_counts,
    jump_chain,
    observable_from_count,
    replicate_rng,
    sample_gap_time,
    simulate,
    simulate_via_jump_chain,
    simulate_yule,
    unobservable_count,
)
from bisample.stats import chi_square_gof, mean_and_se, two_sample_chi_square


def hand_realization():
    # family 0 founded at 0.2, births at 0.5 and 1.0; family 1 founded at 0.9; family 2 at 1.5
    times = np.array([0.2, 0.5, 0.9, 1.0, 1.5, 1.7])
    labels = np.array([0, 0, 1, 0, 2, 2])
    return BIRealization.from_events(times, labels, horizon=2.0)


class TestRealization:
    def test_replicate_streams(self):
        a = replicate_rng(7, 3).random(5)
        b = replicate_rng(7, 3).random(5)
        c = replicate_rng(7, 4).random(5)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_structure(self):
        real = simulate(ModelParams(1.5), 2.0, np.random.default_rng(3))
        founding = [f.founding_time for f in real.families]
        assert founding == sorted(founding)
        for f in real.families:
            assert f.birth_times[0] == f.founding_time
            assert np.all(np.diff(f.birth_times) >= 0)
            assert f.birth_times[-1] <= 2.0
        times, _ = real.events()
        assert real.population_at(2.0) == times.size

    def test_hand_built(self):
        real = hand_realization()
        assert [f.founding_time for f in real.families] == [0.2, 0.9, 1.5]
        assert real.population_at(1.0) == 4
        assert real.family_sizes_at(1.0) == [3, 1]
        assert real.family_sizes_at(0.1) == []

    def test_half_open_counting(self):
        real = hand_realization()
        counts = interval_counts(real, TimeGrid((0.0, 0.5, 1.0, 2.0)))
        # (0, .5]: family 0; (.5, 1]: families 0, 1; (1, 2]: family 2
        np.testing.assert_array_equal(counts.S, [1, 2, 1])
        np.testing.assert_array_equal(counts.Z, [0, 2, 4, 6])
        assert counts.K[0, 1] == 1 and counts.K[1, 2] == 0
        assert counts.T[1, 0] == 1
        assert unobservable_count(real, (0.0, 0.5), (1.0, 2.0)) == 1
        assert observable_from_count(real, (0.0, 1.0), (0.5, 1.0)) == 2
        assert unobservable_count(real, (0.0, 1.0), (0.0, 0.5), (1.0, 2.0)) == 1

    def test_grid_past_horizon(self):
        with pytest.raises(ValueError):
            interval_counts(hand_realization(), TimeGrid((0.0, 3.0)))

    def test_kt_identities(self):
        real = simulate(ModelParams(3.0), 1.5, np.random.default_rng(9))
        c = interval_counts(real, TimeGrid((0.0, 0.5, 1.0, 1.5)))
        np.testing.assert_array_equal(np.diag(c.K), c.S)
        np.testing.assert_array_equal(c.K + c.T, np.repeat(c.S[:, None], 3, axis=1))

    def test_horizon_guard(self, rng):
        with pytest.raises(HorizonGuardError):
            simulate(ModelParams(1.0), 50.0, rng)
        with pytest.raises(HorizonGuardError):
            simulate(ModelParams(1.0), 3.0, rng, max_expected_events=10)
        with pytest.raises(ValueError):
            simulate(ModelParams(1.0), 0.0, rng)


class TestLaw:
    def test_family_count_poisson(self):
        p = ModelParams(2.0)
        n = np.array([len(simulate(p, 1.0, replicate_rng(1, i)).families) for i in range(20_000)])
        m, se = mean_and_se(n)
        assert abs(m - 2.0) < 3 * se
        obs = Counter(n.tolist())
        law = {k: math.exp(-2.0) * 2.0**k / math.factorial(k) for k in range(30)}
        assert chi_square_gof(obs, law)[2] > 1e-3

    def test_two_constructions_agree(self):
        p = ModelParams(1.5)
        grid = TimeGrid((0.0, 0.6, 1.2))
        direct, chain = Counter(), Counter()
        zdirect, zchain = Counter(), Counter()
        for i in range(10_000):
            a = simulate(p, 1.2, replicate_rng(21, i))
            b = simulate_via_jump_chain(p, 1.2, replicate_rng(22, i))
            ca, cb = interval_counts(a, grid), interval_counts(b, grid)
            direct[tuple(np.minimum(ca.S, 5))] += 1
            chain[tuple(np.minimum(cb.S, 5))] += 1
            zdirect[min(int(ca.Z[-1]), 15)] += 1
            zchain[min(int(cb.Z[-1]), 15)] += 1
        assert two_sample_chi_square(direct, chain)[2] > 1e-3
        assert two_sample_chi_square(zdirect, zchain)[2] > 1e-3

    def test_unobservable_means(self):
        p = ModelParams(2.0)
        single, double, observ = [], [], []
        for i in range(20_000):
            real = simulate(p, 2.0, replicate_rng(4, i))
            single.append(unobservable_count(real, (0.0, 1.0), (1.0, 2.0)))
            double.append(unobservable_count(real, (0.0, 0.5), (0.5, 1.0), (1.5, 2.0)))
            observ.append(observable_from_count(real, (0.0, 1.0), (1.0, 2.0)))
        for sample, exact in (
            (single, mean_unobservable_single(p, (0, 1), (1, 2))),
            (double, mean_unobservable_double(p, 0.5, 1.0, 1.5, 2.0)),
            (observ, mean_observable_from(p, (0, 1), (1, 2))),
        ):
            m, se = mean_and_se(sample)
            assert abs(m - exact) < 3.5 * se

    def test_yule_submodel(self, rng):
        assert simulate_yule(1e-12, rng).size == 0
        births = simulate_yule(2.0, rng, founders=2)
        assert np.all(np.diff(births) > 0) and np.all(births <= 2.0)
        with pytest.raises(ValueError):
            simulate_yule(1.0, rng, founders=0)


class TestJumpChain:
    def test_records(self):
        real = hand_realization()
        rec = jump_chain(real, 4)
        assert rec.counts == [(1,), (0, 1), (1, 1, 0), (1, 0, 1, 0)]
        with pytest.raises(ValueError):
            jump_chain(real, 7)

    def test_matches_esf(self):
        p = ModelParams(1.0)
        tally = Counter()
        i = 0
        while sum(tally.values()) < 10_000:
            real = simulate(p, 2.5, replicate_rng(5, i))
            i += 1
            if real.population_at(2.5) >= 4:
                tally[jump_chain(real, 4).counts[-1]] += 1
        assert chi_square_gof(tally, esf_law(p, 4))[2] > 1e-3


class TestEmbedding:
    def test_single_cut_is_population_law(self):
        p = ModelParams(1.7)
        for l in range(5):
            assert embedding_acceptance(p, TimeGrid((0.0, 0.8)), [l]) == pytest.approx(
                float(population_size_pmf(p, 0.8, l))
            )

    def test_marginalises(self):
        p = ModelParams(1.0)
        grid = TimeGrid((0.0, 0.7, 1.1))
        total = math.fsum(embedding_acceptance(p, grid, [2, l]) for l in range(2, 300))
        assert total == pytest.approx(float(population_size_pmf(p, 0.7, 2)), abs=1e-12)

    def test_against_simulation(self):
        p = ModelParams(1.0)
        grid = TimeGrid((0.0, 0.7, 1.1))
        hits = 0
        reps = 40_000
        for i in range(reps):
            real = simulate(p, 1.1, replicate_rng(6, i))
            hits += real.population_at(0.7) == 2 and real.population_at(1.1) == 4
        exact = embedding_acceptance(p, grid, [2, 4])
        assert abs(hits / reps - exact) < 3.5 * math.sqrt(exact * (1 - exact) / reps)

    def test_check_small(self):
        p = ModelParams(1.0)
        grid = fisher_grid(p, SampleSizes((1, 2)))
        rep = conditioned_embedding_check(p, grid, (1, 3), 3000, np.random.default_rng(2))
        assert rep.accepted == 3000
        assert rep.tv_vs_crp_exact < 0.05
        assert sum(rep.counts.values()) == 3000
        d = rep.to_dict()
        assert d["target_l"] == [1, 3]

    def test_validation(self, rng):
        p = ModelParams(1.0)
        grid = TimeGrid((0.0, 0.5, 1.0))
        with pytest.raises(ValueError):
            conditioned_embedding_check(p, grid, (2,), 10, rng)
        with pytest.raises(ValueError):
            conditioned_embedding_check(p, grid, (3, 2), 10, rng)
        with pytest.raises(ValueError):
            conditioned_embedding_check(p, grid, (2, 9), 10, rng)
        with pytest.raises(AcceptanceGuardError):
            conditioned_embedding_check(p, TimeGrid((0.0, 0.01, 0.02)), (8, 8), 10, rng)


class TestGapSampling:
    def test_sample(self):
        rng = np.random.default_rng(0)
        out = [sample_gap_time(ModelParams(3.0), 1.0, rng) for _ in range(200)]
        got = [g for g in out if g is not None]
        assert all(g.N >= 1 and g.W > 0 for g in got)
        with pytest.raises(ValueError):
            sample_gap_time(ModelParams(1.0), 0.0, rng)

    def test_empty_possible(self):
        rng = np.random.default_rng(0)
        out = [sample_gap_time(ModelParams(0.1), 0.01, rng) for _ in range(50)]
        assert any(g is None for g in out)


class TestReferenceValues:
    def test_empty_horizon_frequency(self):
        p = ModelParams(1.5)
        reps = 20_000
        empty = sum(simulate(p, 0.4, replicate_rng(31, i)).population_at(0.4) == 0 for i in range(reps))
        exact = math.exp(-1.5 * 0.4)
        assert abs(empty / reps - exact) < 3.5 * math.sqrt(exact * (1 - exact) / reps)

    def test_lone_family(self):
        real = BIRealization.from_events(np.array([0.5]), np.array([0]), horizon=2.0)
        c = interval_counts(real, TimeGrid((0.0, 1.0, 2.0)))
        np.testing.assert_array_equal(c.S, [1, 0])
        assert c.K[0, 1] == 0
        assert real.families[0].size_at(2.0) == 1

    def test_first_record(self):
        real = simulate(ModelParams(1.0), 1.5, np.random.default_rng(0))
        if real.population_at(1.5):
            assert jump_chain(real, 1).counts == [(1,)]

    def test_jump_chain_independent_of_clock(self):
        # families among the first four arrivals versus the time of the fourth arrival
        p = ModelParams(1.0)
        fam, tau = [], []
        i = 0
        while len(fam) < 4000:
            real = simulate(p, 2.5, replicate_rng(41, i))
            i += 1
            times, _ = real.events()
            if times.size >= 4:
                fam.append(sum(jump_chain(real, 4).counts[-1]))
                tau.append(times[3])
        fam, tau = np.array(fam, float), np.array(tau)
        observed = abs(np.corrcoef(fam, tau)[0, 1])
        perm_rng = np.random.default_rng(1)
        null = [abs(np.corrcoef(perm_rng.permutation(fam), tau)[0, 1]) for _ in range(500)]
        assert np.mean(np.array(null) >= observed) > 1e-3

    def test_single_cut_matches_poisson_relation(self):
        from bisample.esf import conditioning_acceptance

        p = ModelParams(1.3)
        for t, n in ((0.8, 3), (1.5, 5)):
            got = embedding_acceptance(p, TimeGrid((0.0, t)), [n])
            assert got == pytest.approx(conditioning_acceptance(p, -math.expm1(-t), n, "infinite"), rel=1e-12)

    def test_single_cut_law_is_esf(self):
        p = ModelParams(1.0)
        grid = TimeGrid((0.0, 1.0))
        rep = conditioned_embedding_check(p, grid, (3,), 5000, np.random.default_rng(3))
        law = {(c,): pr for c, pr in esf_law(p, 3).items()}
        assert chi_square_gof(rep.counts, law)[2] > 1e-3

    def test_fisher_grid_maximises_acceptance(self):
        p = ModelParams(1.0)
        sizes = SampleSizes((2, 2))
        best = fisher_grid(p, sizes)
        top = embedding_acceptance(p, best, (2, 4))
        t1, t2 = best.cuts[1], best.cuts[2]
        for d1 in np.linspace(-0.3, 0.3, 7):
            for d2 in np.linspace(-0.3, 0.3, 7):
                if d1 == 0 and d2 == 0:
                    continue
                grid = TimeGrid((0.0, t1 + d1, t2 + d1 + d2))
                assert embedding_acceptance(p, grid, (2, 4)) < top
        # and the sampler's own acceptance rate agrees on the ordering
        rng = np.random.default_rng(9)
        fisher_rate = conditioned_embedding_check(p, best, (2, 4), 3000, rng).acceptance_rate
        off_rate = conditioned_embedding_check(p, TimeGrid((0.0, t1 + 0.4, t2 + 0.8)), (2, 4), 3000, rng).acceptance_rate
        assert fisher_rate > off_rate

    def test_gap_given_size(self):
        rng = np.random.default_rng(77)
        by_size = {}
        for _ in range(20_000):
            g = sample_gap_time(ModelParams(1.0), 1.0, rng)
            if g is not None:
                by_size.setdefault(g.N, []).append(g.W)
        for n in (1, 2):
            m, se = mean_and_se(by_size[n])
            assert abs(m - 1 / n) < 3.5 * se

    def test_gap_wait_law(self):
        from scipy import stats

        from bisample.interval_analytics import gap_time_density

        rng = np.random.default_rng(78)
        waits = [g.W for g in (sample_gap_time(ModelParams(1.0), 1.0, rng) for _ in range(8000)) if g is not None]
        grid = np.linspace(1e-9, 40, 400_001)
        dens = gap_time_density(1.0, grid)
        cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(grid))])

        def law_cdf(x):
            return np.interp(x, grid, cdf)

        assert stats.kstest(waits, law_cdf).pvalue > 1e-3
