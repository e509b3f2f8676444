import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalcircle.core import TWO_PI, IntervalSet, SeedSpec, ValidationError
from coalcircle.continuum import (
    advance_coalescing,
    batch_annihilate,
    batch_coalesce,
    batch_pair_meeting_times,
    annihilating_lengths,
    bridge_hit_prob,
    estimate_duality_gap,
    estimate_scaling_exponent,
    init_coalescing,
    simulate_annihilating,
    simulate_block_history,
    write_tau_csv,
)
from coalcircle.formulas import exit_high_cdf, pair_meeting_cdf

SEED = SeedSpec(20270405, 0)


class TestBridgeHitProb:
    def test_closed_form_value(self):
        assert bridge_hit_prob(1.0, 1.0, 1.0) == pytest.approx(math.exp(-1.0), abs=1e-15)

    def test_reflection_identity(self):
        # independent arithmetic route: the image-charge exponent
        # ((g1+g2)^2 - (g2-g1)^2) / (4 dt) must equal g1 g2 / dt
        for g1, g2, dt in [(0.3, 1.7, 0.25), (2.0, 0.1, 1.0), (0.05, 0.05, 1e-3)]:
            image = math.exp(-((g1 + g2) ** 2 - (g2 - g1) ** 2) / (4.0 * dt))
            assert bridge_hit_prob(g1, g2, dt) == pytest.approx(image, rel=1e-12)

    def test_touch_limit(self):
        assert bridge_hit_prob(1e-12, 1.0, 0.01) == pytest.approx(1.0, abs=1e-9)

    def test_small_dt_limit(self):
        assert bridge_hit_prob(1.0, 1.0, 1e-6) < 1e-300 or bridge_hit_prob(1.0, 1.0, 1e-6) == 0.0

    def test_domain(self):
        for bad in [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.0)]:
            with pytest.raises(ValueError):
                bridge_hit_prob(*bad)

    @given(
        st.floats(0.01, 5.0),
        st.floats(0.01, 5.0),
        st.floats(1e-4, 2.0),
    )
    def test_bounds_and_monotone_in_dt(self, g1, g2, dt):
        p = bridge_hit_prob(g1, g2, dt)
        assert 0.0 <= p <= 1.0
        assert bridge_hit_prob(g1, g2, dt / 2) <= p + 1e-15

    @pytest.mark.slow
    def test_against_fine_grid_simulation(self):
        # unconditioned paths: the mean of the formula applied to the
        # simulated endpoints must match the fraction of paths whose
        # fine-grid minimum crossed zero, up to the grid's detection
        # deficit (the grid can only under-count crossings).
        rng = SeedSpec(20270405, 77).generator()
        n_paths, n_sub, dt, g1 = 60_000, 8192, 1.0, 1.0
        sub = dt / n_sub
        g = np.full(n_paths, g1)
        crossed = np.zeros(n_paths, dtype=bool)
        for _ in range(n_sub):
            g = g + rng.standard_normal(n_paths) * math.sqrt(2.0 * sub)
            crossed |= g <= 0.0
        formula = np.where(g > 0, np.exp(-np.maximum(g, 1e-12) * g1 / dt), 1.0)
        diff = crossed.mean() - formula.mean()
        se = np.std(crossed.astype(float) - formula) / math.sqrt(n_paths)
        # grid misses some crossings: diff should be slightly negative,
        # never significantly positive
        assert diff < 3.0 * se
        assert abs(diff) < 0.01


class TestAdvanceCoalescing:
    def test_zero_dt_identity(self):
        s = init_coalescing([0.2, 1.0, 4.0])
        assert advance_coalescing(s, 0.0, SEED) is s

    def test_deterministic(self):
        s = init_coalescing([0.2, 1.0, 4.0, 5.0])
        a = advance_coalescing(s, 1e-3, SEED)
        b = advance_coalescing(s, 1e-3, SEED)
        assert np.array_equal(a.positions, b.positions)
        assert a.partition == b.partition

    def test_positions_sorted_and_counted(self):
        s = init_coalescing([0.2, 1.0, 4.0, 5.0, 2.2])
        for k in range(60):
            s = advance_coalescing(s, 5e-3, SeedSpec(20270405, k))
            assert np.all(np.diff(s.positions) > 0)
            assert len(s.positions) == s.partition.block_count

    def test_single_particle_marginal_uniform(self):
        # invariance of the uniform law, chi-square over 20 bins
        from scipy.stats import chi2

        rng = SEED.generator()
        reps = 100_000
        pos = rng.uniform(0.0, TWO_PI, reps)
        pos = (pos + rng.standard_normal(reps) * math.sqrt(0.5)) % TWO_PI
        counts, _ = np.histogram(pos, bins=20, range=(0.0, TWO_PI))
        expected = reps / 20.0
        stat = float(((counts - expected) ** 2 / expected).sum())
        p_value = float(chi2.sf(stat, df=19))
        assert p_value > 0.001

    def test_eventual_full_coalescence(self):
        s = init_coalescing(np.linspace(0.1, 6.0, 6))
        for k in range(4000):
            s = advance_coalescing(s, 5e-3, SeedSpec(99, k))
            if s.block_count == 1:
                break
        assert s.block_count == 1
        assert s.partition.block_min == (0,) * 6


class TestBlockHistory:
    def test_single_particle(self):
        tr = simulate_block_history(1, 1.0, [0.25, 1.0], 1e-2, SEED)
        assert tr.counts.tolist() == [1, 1]

    def test_time_zero_grid_point(self):
        tr = simulate_block_history(4, 0.5, [0.0, 0.5], 1e-2, SEED)
        assert tr.counts[0] == 4
        assert np.allclose(tr.frequencies(0), 0.25)

    def test_block_sizes_sum_exactly(self):
        tr = simulate_block_history(64, 0.6, np.linspace(0.05, 0.6, 8), 1e-3, SEED)
        for sizes in tr.block_sizes:
            assert int(sizes.sum()) == 64

    def test_counts_non_increasing_and_match_merges(self):
        tr = simulate_block_history(64, 0.6, np.linspace(0.05, 0.6, 8), 1e-3, SEED)
        assert np.all(np.diff(tr.counts) <= 0)
        merge_times = np.array([m[0] for m in tr.merges])
        for i, t in enumerate(tr.grid):
            assert tr.counts[i] == 64 - int((merge_times <= t).sum())

    def test_tau_matrix_is_ultrametric(self):
        tr = simulate_block_history(40, 1.5, [1.5], 1e-3, SeedSpec(3, 1))
        tau = tr.tau_matrix()
        assert np.array_equal(tau, tau.T)
        n = tr.n
        for k in range(n):
            ceil = np.maximum(tau[:, k : k + 1], tau[k : k + 1, :])
            assert np.all(tau - ceil <= 0.0)

    def test_deterministic(self):
        a = simulate_block_history(32, 0.4, [0.4], 1e-3, SeedSpec(5, 5))
        b = simulate_block_history(32, 0.4, [0.4], 1e-3, SeedSpec(5, 5))
        assert a.counts.tolist() == b.counts.tolist()
        assert a.merges == b.merges

    def test_grid_validation(self):
        with pytest.raises(ValidationError):
            simulate_block_history(0, 1.0, [0.5], 1e-3, SEED)
        with pytest.raises(ValidationError):
            simulate_block_history(4, 1.0, [2.0], 1e-3, SEED)

    @pytest.mark.slow
    def test_two_particle_meeting_probability(self):
        reps = 20_000
        rng = SEED.generator(tag=5)
        starts = rng.uniform(0.0, TWO_PI, (reps, 2))
        times = batch_pair_meeting_times(starts, 1.0, 1e-4, rng)
        met = float(np.isfinite(times).mean())
        target = pair_meeting_cdf(1.0)
        se = math.sqrt(target * (1 - target) / reps)
        assert abs(met - target) <= 3.0 * se

    @pytest.mark.slow
    def test_dt_halving_bias_control(self):
        reps = 20_000
        vals = {}
        for dt in (2e-4, 1e-4):
            rng = SeedSpec(20270405, 31).generator(tag=int(dt * 1e6))
            starts = rng.uniform(0.0, TWO_PI, (reps, 2))
            times = batch_pair_meeting_times(starts, 0.5, dt, rng)
            vals[dt] = float(np.isfinite(times).mean())
        p = pair_meeting_cdf(0.5)
        se = math.sqrt(p * (1 - p) / reps)
        assert abs(vals[2e-4] - vals[1e-4]) <= 3.0 * math.sqrt(2.0) * se

    @pytest.mark.slow
    def test_exchangeability_under_index_permutation(self):
        # permuting which index owns which start leaves the law of the
        # block-count unchanged; fixed seed budget on both arms
        reps, n, t = 3000, 5, 0.3
        rng = SeedSpec(20270405, 63).generator()
        counts_a = np.zeros(reps)
        counts_b = np.zeros(reps)
        for r in range(reps):
            starts = rng.uniform(0.0, TWO_PI, n)
            perm = rng.permutation(n)
            ra = batch_coalesce(starts[None, :], t, 1e-3, SeedSpec(1, r).generator())
            rb = batch_coalesce(starts[perm][None, :], t, 1e-3, SeedSpec(2, r).generator())
            counts_a[r] = ra[2].sum()
            counts_b[r] = rb[2].sum()
        diff = counts_a.mean() - counts_b.mean()
        se = math.sqrt(counts_a.var(ddof=1) / reps + counts_b.var(ddof=1) / reps)
        assert abs(diff) <= 3.0 * se


class TestAnnihilating:
    def test_absorbing_states(self):
        assert simulate_annihilating(IntervalSet.empty(), 2.0, 1e-3, SEED).is_empty
        assert simulate_annihilating(IntervalSet.full_circle(), 2.0, 1e-3, SEED).is_full

    def test_time_zero(self):
        b = IntervalSet.from_arcs([(0.0, 1.0)])
        assert simulate_annihilating(b, 0.0, 1e-3, SEED) == b

    def test_endpoint_parity_even(self):
        b = IntervalSet.from_arcs([(0.0, 1.0), (2.0, 3.0)])
        for k in range(40):
            out = simulate_annihilating(b, 0.05, 1e-3, SeedSpec(11, k))
            if out.is_empty or out.is_full:
                continue
            assert out.arc_count in (1, 2)

    def test_arc_count_non_increasing(self):
        b = IntervalSet.from_arcs([(0.0, 0.8), (1.5, 2.5), (4.0, 5.5)])
        for k in range(30):
            out = simulate_annihilating(b, 0.2, 1e-3, SeedSpec(13, k))
            if not (out.is_empty or out.is_full):
                assert out.arc_count <= 3

    def test_deterministic(self):
        b = IntervalSet.from_arcs([(0.0, 2.0)])
        a1 = simulate_annihilating(b, 0.5, 1e-3, SeedSpec(17, 0))
        a2 = simulate_annihilating(b, 0.5, 1e-3, SeedSpec(17, 0))
        assert a1 == a2

    @pytest.mark.slow
    def test_single_arc_full_absorption_probability(self):
        # long-horizon absorption at the full circle has probability
        # length / (2 pi); at t = 30 the survival remainder is ~5e-4
        reps = 20_000
        L = 2.4
        b = IntervalSet.from_arcs([(0.3, 0.3 + L)])
        rng = SeedSpec(20270405, 41).generator()
        status, *_ = batch_annihilate(b, 30.0, 5e-3, rng, reps)
        p_full = float((status == 2).mean())
        p_surv = float((status == 0).mean())
        target = L / TWO_PI
        se = math.sqrt(target * (1 - target) / reps)
        assert p_surv < 2e-3
        assert abs(p_full - target) <= 3.0 * se + p_surv

    @pytest.mark.slow
    def test_exit_law_matches_series(self):
        reps = 20_000
        b = IntervalSet.from_arcs([(0.0, math.pi)])
        rng = SeedSpec(20270405, 43).generator()
        status, ang, role, alive = batch_annihilate(b, 1.0, 1e-4, rng, reps)
        tgt_full = exit_high_cdf(math.pi, 1.0)
        se = math.sqrt(tgt_full * (1 - tgt_full) / reps)
        assert abs((status == 2).mean() - tgt_full) <= 3.0 * se
        assert abs((status == 1).mean() - tgt_full) <= 3.0 * se
        # total occupied length is a martingale started at pi
        lens = annihilating_lengths(status, ang, role, alive)
        assert lens.mean() == pytest.approx(math.pi, abs=3.0 * TWO_PI / math.sqrt(reps))


class TestDualityGap:
    def test_time_zero_subset(self):
        b = IntervalSet.from_arcs([(0.0, 2.0)])
        est = estimate_duality_gap([0.5, 1.0], b, 0.0, 100, 1e-3, SEED)
        assert (est.lhs, est.rhs, est.se_joint) == (1.0, 1.0, 0.0)

    def test_time_zero_not_subset(self):
        b = IntervalSet.from_arcs([(0.0, 2.0)])
        est = estimate_duality_gap([0.5, 3.0], b, 0.0, 100, 1e-3, SEED)
        assert (est.lhs, est.rhs, est.se_joint) == (0.0, 0.0, 0.0)

    def test_empty_a_rejected(self):
        with pytest.raises(ValidationError):
            estimate_duality_gap([], IntervalSet.from_arcs([(0.0, 1.0)]), 0.5, 10, 1e-3, SEED)

    @pytest.mark.slow
    def test_single_particle_heat_kernel(self):
        # P{W_{x0}(t) in B} for one particle is the wrapped heat mass of
        # B; oracle values from 30-digit series summation
        cases = [
            ((0.5, 3.5), 0.5, 0.239791111854879),
            ((5.9, 1.2), 0.2, 0.80058495566913),
        ]
        for (a0, b0), t, target in cases:
            b = IntervalSet.from_arcs([(a0, b0)])
            est = estimate_duality_gap([0.0], b, t, 40_000, 1e-3, SeedSpec(20270405, 51))
            se = math.sqrt(target * (1 - target) / 40_000)
            assert abs(est.lhs - target) <= 3.5 * se
            assert abs(est.rhs - target) <= 3.5 * se

    @pytest.mark.slow
    def test_two_sides_agree(self):
        b = IntervalSet.from_arcs([(0.2, 2.8), (3.5, 5.0)])
        est = estimate_duality_gap([0.7, 2.0, 4.0], b, 0.25, 30_000, 2e-4, SeedSpec(20270405, 53))
        assert est.gap <= 3.0 * est.se_joint + 1e-9


class TestScalingExponent:
    def test_exact_power_law(self):
        ts = np.geomspace(1e-3, 1.0, 12)
        fit = estimate_scaling_exponent(ts, 3.0 * ts**0.5)
        assert fit.slope == pytest.approx(0.5, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_constant_curve(self):
        fit = estimate_scaling_exponent([1.0, 2.0, 3.0, 4.0], [2.0, 2.0, 2.0, 2.0])
        assert fit.slope == pytest.approx(0.0, abs=1e-14)

    def test_pair_cdf_small_time_slope(self):
        ts = np.geomspace(1e-4, 1e-2, 24)
        fit = estimate_scaling_exponent(ts, pair_meeting_cdf(ts))
        assert abs(fit.slope - 0.5) <= 0.01

    def test_validation(self):
        with pytest.raises(ValidationError):
            estimate_scaling_exponent([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValidationError):
            estimate_scaling_exponent([1.0, 2.0, 3.0, -4.0], [1.0, 2.0, 3.0, 4.0])


class TestTraceCsv:
    def test_trace_and_tau_round_trip(self, tmp_path):
        from coalcircle.tree import read_tau_csv

        tr = simulate_block_history(12, 0.8, [0.2, 0.8], 1e-3, SeedSpec(19, 0))
        trace_path = tmp_path / "trace.csv"
        tr.write_trace_csv(str(trace_path), rep=3)
        lines = trace_path.read_text().strip().splitlines()
        assert lines[0].startswith("rep,t,N,F_1")
        assert len(lines) == 3

        tau_path = tmp_path / "tau.csv"
        tr.write_tau_csv(str(tau_path))
        m = read_tau_csv(str(tau_path))
        assert m.n == 12
        assert m.censor_time == pytest.approx(0.8)
        assert np.allclose(m.dist, tr.tau_matrix())
