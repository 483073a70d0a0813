import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from levytrim.errors import ConfigError, ContractError
from levytrim.levy_measure import (
    LevyMeasureSpec, ZERO_TAIL, catalog, step_tail, tie_rates,
)
from levytrim.pathsim import IDENTITY, SimConfig, TrimMode, simulate_summary
from levytrim.representation import (
    joint_sample_trimmed_with_jump, ordered_jump_bounds, ordered_jump_cdf, sample_ordered_jump,
    sample_trimmed_rep, truncated_triplet,
)

KS_99 = 1.63
KS2_999 = 1.95
SLACK = 1.2
QUAD = dict(epsabs=0.0, epsrel=1e-12, limit=200)


def two_sample_threshold(n):
    return SLACK * KS2_999 * math.sqrt(2.0 / n)


def single_atom_spec():
    return LevyMeasureSpec(0.0, 0.0, step_tail([1.0], [3.0]), ZERO_TAIL, name="one-atom")


class TestTruncatedTriplet:
    def test_one_sided_shift(self):
        spec = catalog("gamma-subordinator", {})
        v = spec.tail(0.5)
        tri = truncated_triplet(spec, "modulus", v)
        assert tri.level == pytest.approx(0.5, rel=1e-12)
        removed, _ = integrate.quad(lambda y: math.exp(-y), 0.5, 1.0, **QUAD)
        assert tri.shifted_gamma == pytest.approx(spec.gamma - removed, rel=1e-10)

    def test_symmetric_shift_vanishes(self):
        spec = catalog("symmetric-stable", {"alpha": 1.5})
        for v in (0.5, 2.0, 50.0):
            assert truncated_triplet(spec, "modulus", v).shifted_gamma == spec.gamma

    def test_gamma_type_cancellation(self):
        spec = catalog("gamma-type", {})
        tri = truncated_triplet(spec, "modulus", spec.tail(0.5))
        assert tri.level == pytest.approx(0.5, rel=1e-12)
        plus, _ = integrate.quad(lambda y: math.exp(-y), 0.5, 1.0, **QUAD)
        minus = plus  # mirror image
        assert abs(tri.shifted_gamma - (spec.gamma - (plus - minus))) <= 1e-10

    def test_levels_above_one_keep_gamma(self):
        spec = catalog("gamma-subordinator", {})
        tri = truncated_triplet(spec, "asymmetric", spec.tail_plus(1.5), None)
        assert tri.level_plus > 1
        assert tri.shifted_gamma == spec.gamma
        assert tri.level_minus == np.inf

    def test_truncated_tails_vanish_at_level(self):
        spec = catalog("atomic-comb", {})
        tri = truncated_triplet(spec, "modulus", 20.0)
        lvl = tri.level
        assert tri.truncated_tail_plus(lvl) == 0.0
        assert tri.truncated_tail_minus(lvl * 1.5) == 0.0
        assert tri.truncated_tail_plus.left_limit(lvl) == 0.0  # atom at the level dropped
        below = lvl / 2
        full = spec.tail_plus(below) - spec.tail_plus.left_limit(lvl)
        assert tri.truncated_tail_plus(below) == pytest.approx(full)

    def test_truncated_spec_moments(self):
        spec = catalog("gamma-type", {})
        tri = truncated_triplet(spec, "modulus", spec.tail(0.3))
        small = tri.spec
        # below the level the truncated process shares nu and V with the full one
        for x in (1e-3, 0.1, 0.29):
            assert small.nu(x) == pytest.approx(spec.nu(x), abs=1e-12)
            assert small.big_v(x) == pytest.approx(spec.big_v(x), rel=1e-12)

    def test_tie_rates_attached(self):
        spec = catalog("atomic-comb", {})
        v = 5.5  # strictly inside the jump of the two-sided tail at an atom
        tri = truncated_triplet(spec, "modulus", v)
        kp, km = tie_rates(spec, v, "modulus")
        assert (tri.tie_plus, tri.tie_minus) == (kp, km)
        assert kp + km == pytest.approx(spec.tail_modulus.left_limit(tri.level) - v)

    def test_bad_levels(self):
        spec = catalog("gamma-type", {})
        with pytest.raises(ConfigError):
            truncated_triplet(spec, "modulus", 0.0)
        with pytest.raises(ConfigError):
            truncated_triplet(spec, "sideways", 1.0)


class TestOrderedJumpCdf:
    def test_median_point(self):
        spec = catalog("symmetric-stable", {"alpha": 1.0})
        y = 2.0 / math.log(2.0)  # t * Pi(y) = ln 2 at t = 1
        assert ordered_jump_cdf(spec, 1.0, 0, y) == pytest.approx(0.5, rel=1e-14)

    def test_zero_tail_mass(self):
        spec = catalog("gamma-subordinator", {})
        assert ordered_jump_cdf(spec, 1.0, 0, 1e6, "plus") == 0.0
        assert ordered_jump_cdf(spec, 1.0, 3, 1.0, "minus") == 0.0

    def test_rank_two(self):
        spec = catalog("symmetric-stable", {"alpha": 1.0})
        # t * Pi(2) = 1 at t = 1
        assert ordered_jump_cdf(spec, 1.0, 1, 2.0) == pytest.approx(1 - 2 / math.e, rel=1e-13)
        assert 1 - 2 / math.e == pytest.approx(0.26424, abs=1e-5)

    def test_plus_side_rank_one(self):
        spec = catalog("gamma-subordinator", {})
        y = spec.tail_plus.inverse(1.0)
        assert ordered_jump_cdf(spec, 1.0, 0, y, "plus") == pytest.approx(1 - math.exp(-1), rel=1e-10)

    @pytest.mark.parametrize("name", ["gamma-type", "symmetric-stable", "atomic-comb", "log-doa",
                                      "relative-stable-subordinator", "gaussian-plus-gamma"])
    @pytest.mark.parametrize("r", [0, 1, 2, 4])
    def test_sandwich_exact(self, name, r):
        spec = catalog(name, {})
        y = np.logspace(-8, 1, 64)
        for t in (0.01, 0.5):
            p = ordered_jump_cdf(spec, t, r, y)
            lo, hi = ordered_jump_bounds(spec, t, r, y)
            assert np.all(lo <= p)
            assert np.all(p <= hi)

    def test_bounds_spot(self):
        spec = catalog("symmetric-stable", {"alpha": 1.0})
        lo, hi = ordered_jump_bounds(spec, 1.0, 0, 2.0)
        assert (lo, hi) == (pytest.approx(math.exp(-1)), 1.0)

    def test_jumps_only_at_atoms(self):
        spec = catalog("atomic-comb", {})
        atoms = 2.0 ** -np.arange(1, 7)
        left = ordered_jump_cdf(spec, 0.01, 0, atoms * (1 - 1e-12))
        at = ordered_jump_cdf(spec, 0.01, 0, atoms)
        assert np.all(left - at > 1e-3)
        mids = atoms * 1.5
        assert np.all(ordered_jump_cdf(spec, 0.01, 0, mids * (1 - 1e-12))
                      == ordered_jump_cdf(spec, 0.01, 0, mids))
        smooth = catalog("gamma-type", {})
        diff = (ordered_jump_cdf(smooth, 0.5, 0, atoms * (1 - 1e-12))
                - ordered_jump_cdf(smooth, 0.5, 0, atoms))
        assert np.all(diff < 1e-9)


class TestSampleOrderedJump:
    def test_stable_median(self):
        spec = catalog("symmetric-stable", {"alpha": 1.0})
        draws = sample_ordered_jump(spec, 1.0, 1, rng=21, n=100_000)
        assert abs(np.median(draws) - 2.0 / math.log(2.0)) <= 0.05

    def test_rank_ordering_in_mean(self):
        spec = catalog("gamma-type", {})
        m1 = sample_ordered_jump(spec, 0.5, 1, rng=22, n=10_000).mean()
        m2 = sample_ordered_jump(spec, 0.5, 2, rng=23, n=10_000).mean()
        assert m2 <= m1

    def test_single_atom(self):
        draws = sample_ordered_jump(single_atom_spec(), 1.0, 1, "plus", rng=24, n=20_000)
        assert set(np.unique(draws)) <= {0.0, 1.0}
        p = 1 - math.exp(-3)
        se = math.sqrt(p * (1 - p) / draws.size)
        assert abs(np.mean(draws == 1.0) - p) <= 3 * se

    def test_scalar_and_errors(self):
        spec = catalog("gamma-type", {})
        assert isinstance(sample_ordered_jump(spec, 0.1, 1, rng=1), float)
        with pytest.raises(ConfigError):
            sample_ordered_jump(spec, 0.1, 0)

    @settings(max_examples=50, deadline=None)
    @given(r=st.integers(0, 6), log_y=st.floats(-12, 1), t=st.floats(1e-3, 2.0))
    def test_exceedance_decreasing_in_rank(self, r, log_y, t):
        spec = catalog("gamma-type", {})
        y = 10.0 ** log_y
        assert ordered_jump_cdf(spec, t, r + 1, y) <= ordered_jump_cdf(spec, t, r, y)


class TestTrimmedRepresentation:
    def test_atomless_has_no_ties(self):
        spec = catalog("gamma-type", {})
        for v in (0.1, 1.0, 7.0):
            assert tie_rates(spec, v, "modulus") == (0.0, 0.0)

    def test_identity_mode_matches_untrimmed(self):
        spec = catalog("gamma-type", {})
        n = 50_000
        path = simulate_summary(spec, 0.1, n, rng=31).value
        rep = sample_trimmed_rep(spec, 0.1, IDENTITY, rng=32, n=n)
        assert stats.ks_2samp(path, rep).statistic <= two_sample_threshold(n)

    @pytest.mark.parametrize("name,t,mode", [
        ("gamma-type", 0.1, TrimMode.modulus(1)),
        ("atomic-comb", 0.5, TrimMode.modulus(1)),
        ("gamma-subordinator", 0.1, TrimMode.asymmetric(1, 0)),
    ])
    def test_two_samplers_agree(self, name, t, mode):
        spec = catalog(name, {})
        n = 50_000
        path = simulate_summary(spec, t, n, [mode], rng=33)[mode].trimmed
        rep = sample_trimmed_rep(spec, t, mode, rng=34, n=n)
        assert stats.ks_2samp(path, rep).statistic <= two_sample_threshold(n)

    def test_level_marginal(self):
        spec = catalog("gamma-type", {})
        n, t = 100_000, 0.1
        _, level = joint_sample_trimmed_with_jump(spec, t, TrimMode.modulus(2), rng=35, n=n)

        def cdf(y):
            return 1.0 - ordered_jump_cdf(spec, t, 1, np.asarray(y))

        assert stats.kstest(level, cdf).statistic <= KS_99 / math.sqrt(n)

    def test_asymmetric_levels(self):
        spec = catalog("gamma-type", {})
        _, (lp, lm) = joint_sample_trimmed_with_jump(spec, 0.1, TrimMode.asymmetric(1, 0), rng=36)
        assert lp > 0 and lm == np.inf

    def test_coupling_below_level(self):
        spec = catalog("symmetric-stable", {"alpha": 1.5})
        values, levels, jumps = joint_sample_trimmed_with_jump(
            spec, 0.1, TrimMode.modulus(1), rng=37, n=50, return_jumps=True)
        for lvl, j in zip(levels, jumps):
            assert np.all(np.abs(j) < lvl)

    def test_reproducible_and_thread_invariant(self):
        spec = catalog("atomic-comb", {})
        mode = TrimMode.asymmetric(1, 1)
        a = sample_trimmed_rep(spec, 0.5, mode, SimConfig(block_size=300), rng=38, n=1000)
        b = sample_trimmed_rep(spec, 0.5, mode, SimConfig(block_size=300, threads=4), rng=38,
                               n=1000)
        assert np.array_equal(a, b)
        assert isinstance(sample_trimmed_rep(spec, 0.5, mode, rng=38), float)

    def test_contract(self):
        spec = catalog("gamma-subordinator", {})
        with pytest.raises(ContractError):
            sample_trimmed_rep(spec, 0.1, TrimMode.asymmetric(0, 1), rng=1, n=10)

    def test_tie_conservation_comb(self):
        spec = catalog("atomic-comb", {})
        rng = np.random.default_rng(5)
        for v in rng.uniform(0.5, 2000.0, 40):
            kp, km = tie_rates(spec, v, "modulus")
            lvl = spec.tail_modulus.inverse(v)
            expected = spec.tail_modulus.left_limit(lvl) - v if spec.tail_modulus.atom_mass(lvl) else 0
            assert 0.1 * (kp + km) == pytest.approx(0.1 * expected, rel=1e-12, abs=1e-15)
