import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from levytrim.errors import ConfigError, ContractError, InsufficientResolutionError, ResolutionError
from levytrim.levy_measure import (
    LEVEL_FLOOR, LevyMeasureSpec, ZERO_TAIL, catalog, power_tail,
)
from levytrim.pathsim import (
    IDENTITY, PathSample, SimConfig, TrimMode, default_epsilon, quadratic_variation,
    resolve_epsilon, simulate_path, simulate_paths, simulate_summary, trim,
)

KS_99 = 1.63
RECON_RTOL = 1e-12
SE_BAND = 3.0


def brownian(sigma2=1.0):
    return LevyMeasureSpec(0.0, sigma2, ZERO_TAIL, ZERO_TAIL, name="brownian")


def fixed_path(sizes, times=None, sigma2=0.0, horizon=1.0, small_variance=0.0):
    sizes = np.asarray(sizes, dtype=float)
    times = np.linspace(0.1, 0.9, sizes.size) if times is None else np.asarray(times, float)
    return PathSample(horizon, times, sizes, 0.01, 0.0, 0.0, 0.0, sigma2 * horizon,
                      small_variance)


MULTISET = [3.0, -2.0, 1.5, -0.5, 0.2]


class TestTrimMultiset:
    def test_asymmetric_one_one(self):
        path = fixed_path(MULTISET)
        res = trim(path, TrimMode.asymmetric(1, 1))
        assert res.removed_positive == [3.0]
        assert res.removed_negative == [2.0]
        assert res.trimmed_value == pytest.approx(path.value - 3.0 + 2.0, abs=1e-15)

    def test_modulus_two(self):
        path = fixed_path(MULTISET)
        res = trim(path, TrimMode.modulus(2))
        assert res.removed_modulus == [3.0, -2.0]
        assert res.trimmed_value == pytest.approx(path.value - 1.0, abs=1e-15)

    def test_identity(self):
        path = fixed_path(MULTISET)
        assert trim(path, IDENTITY).trimmed_value == path.value
        assert trim(path, TrimMode.modulus(0)).trimmed_value == path.value

    def test_one_sided(self):
        path = fixed_path(MULTISET)
        assert trim(path, TrimMode.one_sided_plus(2)).removed_positive == [3.0, 1.5]
        assert trim(path, TrimMode.one_sided_minus(2)).removed_negative == [2.0, 0.5]

    def test_tie_broken_by_arrival(self):
        path = fixed_path([1.0, -1.0, 1.0], times=[0.1, 0.2, 0.3])
        assert trim(path, TrimMode.modulus(1)).removed_modulus == [1.0]
        late_first = fixed_path([-1.0, 1.0], times=[0.1, 0.2])
        assert trim(late_first, TrimMode.modulus(1)).removed_modulus == [-1.0]

    def test_insufficient_resolution(self):
        with pytest.raises(InsufficientResolutionError):
            trim(fixed_path([1.0, -0.5]), TrimMode.asymmetric(2, 0))

    def test_contract_error_finite_side(self):
        spec = catalog("gamma-subordinator", {})
        path = simulate_path(spec, 0.1, rng=1)
        with pytest.raises(ContractError):
            trim(path, TrimMode.asymmetric(0, 1))
        with pytest.raises(ContractError):
            simulate_summary(spec, 0.1, 10, [TrimMode.asymmetric(0, 1)], rng=1)

    def test_bad_modes(self):
        with pytest.raises(ConfigError):
            TrimMode.asymmetric(-1, 0)
        with pytest.raises(ConfigError):
            TrimMode("modulus", 1, 1)
        with pytest.raises(ConfigError):
            TrimMode("sideways", 1, 0)


class TestQuadraticVariation:
    def test_brownian(self):
        path = simulate_path(brownian(), 2.0, rng=4)
        for mode in (IDENTITY, TrimMode.asymmetric(0, 0)):
            assert quadratic_variation(path, mode) == (2.0, 2.0)

    def test_two_jumps(self):
        path = fixed_path([3.0, -2.0])
        assert quadratic_variation(path, TrimMode.modulus(1)) == (13.0, 4.0)

    def test_gamma_subordinator_mean(self):
        t, n = 0.01, 100_000
        s = simulate_summary(catalog("gamma-subordinator", {}), t, n, rng=11)
        se = s.qv.std(ddof=1) / math.sqrt(n)
        assert abs(s.qv.mean() - t * 1.0) <= SE_BAND * se


class TestSimulatePath:
    def test_brownian_reproducible(self):
        a = simulate_path(brownian(), 1.0, rng=123)
        b = simulate_path(brownian(), 1.0, rng=123)
        assert a.sizes.size == 0
        assert a.value == b.value
        assert a.value != simulate_path(brownian(), 1.0, rng=124).value

    def test_brownian_normal_law(self):
        s = simulate_summary(brownian(), 1.0, 20_000, rng=5)
        assert stats.kstest(s.value, "norm").statistic <= KS_99 / math.sqrt(20_000)

    def test_stable_count(self):
        spec = catalog("symmetric-stable", {"alpha": 1.0})
        t, n = 0.01, 10_000
        eps = 2 * t / 50  # t * 2/eps = 50
        s = simulate_summary(spec, t, n, config=SimConfig(epsilon=eps), rng=6)
        assert t * spec.tail(eps) == pytest.approx(50.0)
        assert abs(s.counts.mean() - 50) <= 3 * math.sqrt(50)
        se = math.sqrt(50 / n)
        assert abs(s.counts.mean() - 50) <= 4 * se
        assert s.counts.var(ddof=1) == pytest.approx(50, abs=4 * 50 * math.sqrt(2 / n))

    def test_gamma_subordinator_mean(self):
        t, n = 0.1, 100_000
        s = simulate_summary(catalog("gamma-subordinator", {}), t, n, rng=7)
        se = s.value.std(ddof=1) / math.sqrt(n)
        assert abs(s.value.mean() - 0.1) <= SE_BAND * se

    def test_path_invariants(self):
        spec = catalog("log-doa", {})
        path = simulate_path(spec, 0.01, rng=8)
        assert np.all(np.abs(path.sizes) > path.epsilon)
        assert np.all(np.diff(path.times) > 0)
        assert np.all((path.times > 0) & (path.times <= 0.01))
        assert math.isfinite(path.value)
        assert path.drift_part == pytest.approx(0.01 * spec.nu(path.epsilon))

    def test_summary_matches_paths(self):
        spec = catalog("gamma-type", {})
        paths = simulate_paths(spec, 0.1, 7, config=SimConfig(block_size=3), rng=9)
        s = simulate_summary(spec, 0.1, 7, config=SimConfig(block_size=3), rng=9)
        np.testing.assert_allclose([p.value for p in paths], s.value, rtol=1e-13)
        assert simulate_path(spec, 0.1, rng=9).value == simulate_paths(spec, 0.1, 1, rng=9)[0].value

    def test_thread_count_invariance(self):
        spec = catalog("gamma-type", {})
        modes = [TrimMode.modulus(1)]
        a = simulate_summary(spec, 0.01, 5000, modes, SimConfig(threads=1, block_size=512), rng=10)
        b = simulate_summary(spec, 0.01, 5000, modes, SimConfig(threads=3, block_size=512), rng=10)
        assert np.array_equal(a.value, b.value)
        assert np.array_equal(a[modes[0]].trimmed, b[modes[0]].trimmed)

    def test_resolution_budget(self):
        spec = catalog("symmetric-stable", {})
        with pytest.raises(ResolutionError):
            resolve_epsilon(spec, 1.0, 0, SimConfig(epsilon=1e-9, count_budget=1e6))

    def test_default_epsilon_rule(self):
        spec = catalog("symmetric-stable", {})
        t = 0.01
        assert t * spec.tail(default_epsilon(spec, t, 0)) == pytest.approx(500)
        assert t * spec.tail(default_epsilon(spec, t, 12)) == pytest.approx(650)

    def test_default_epsilon_floor(self):
        assert default_epsilon(catalog("gamma-type", {}), 0.1, 1) == LEVEL_FLOOR

    def test_bad_horizon(self):
        with pytest.raises(ConfigError):
            simulate_path(brownian(), 0.0)


class TestLargestJumpLaw:
    @pytest.mark.parametrize("name,t", [
        ("symmetric-stable", 0.01),
        ("log-doa", 0.01),
        ("gamma-type", 0.1),
        ("relative-stable-subordinator", 0.01),
    ])
    def test_rank_one_ks(self, name, t):
        spec = catalog(name, {})
        n = 100_000
        # t*Pi(eps) = 100: the rank-one level is far above eps either way
        cfg = SimConfig(target_count=50)
        s = simulate_summary(spec, t, n, [TrimMode.modulus(1)], cfg, rng=12)
        level = np.abs(s[TrimMode.modulus(1)].removed_modulus[:, 0])
        assert t * spec.tail(s.epsilon) >= 50

        def cdf(y):
            return np.exp(-t * spec.tail(np.asarray(y)))

        assert stats.kstest(level, cdf).statistic <= KS_99 / math.sqrt(n)


class TestTrimProperties:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), r=st.integers(0, 4), s=st.integers(0, 4))
    def test_reconstruction(self, seed, r, s):
        path = simulate_path(catalog("gamma-type", {}), 0.1, rng=seed)
        value = path.value
        asym = trim(path, TrimMode.asymmetric(r, s))
        back = asym.trimmed_value + sum(asym.removed_positive) - sum(asym.removed_negative)
        assert back == pytest.approx(value, rel=RECON_RTOL, abs=1e-15)
        assert asym.removed_positive == sorted(asym.removed_positive, reverse=True)
        assert asym.removed_negative == sorted(asym.removed_negative, reverse=True)
        mod = trim(path, TrimMode.modulus(r + s))
        assert mod.trimmed_value + sum(mod.removed_modulus) == pytest.approx(
            value, rel=RECON_RTOL, abs=1e-15)
        mags = np.abs(mod.removed_modulus)
        assert np.all(np.diff(mags) <= 0)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), r=st.integers(0, 5))
    def test_modulus_increment(self, seed, r):
        path = simulate_path(catalog("log-doa", {}), 0.01, rng=seed)
        lo = trim(path, TrimMode.modulus(r))
        hi = trim(path, TrimMode.modulus(r + 1))
        assert hi.trimmed_value - lo.trimmed_value == pytest.approx(
            -hi.removed_modulus[-1], rel=1e-9, abs=1e-14)

    def test_batch_reconstruction(self):
        spec = catalog("gamma-type", {})
        modes = [TrimMode.asymmetric(2, 1), TrimMode.modulus(3)]
        s = simulate_summary(spec, 0.1, 4000, modes, rng=13)
        a = s[modes[0]]
        back = a.trimmed + a.removed_plus.sum(1) - a.removed_minus.sum(1)
        np.testing.assert_allclose(back, s.value, rtol=1e-9, atol=1e-14)
        m = s[modes[1]]
        np.testing.assert_allclose(m.trimmed + m.removed_modulus.sum(1), s.value,
                                   rtol=1e-9, atol=1e-14)
        assert np.all(m.trimmed_qv <= s.qv)

    def test_floor_clamped_missing_ranks_are_zero(self):
        spec = catalog("gamma-subordinator", {})
        s = simulate_summary(spec, 1e-4, 2000, [TrimMode.asymmetric(1, 0)], rng=14)
        assert s.epsilon == LEVEL_FLOOR
        removed = s[TrimMode.asymmetric(1, 0)].removed_plus[:, 0]
        assert np.all(removed[s.counts == 0] == 0.0)

    def test_insufficient_in_batch(self):
        spec = LevyMeasureSpec(0.0, 0.0, power_tail(1.0, 1.0), ZERO_TAIL)
        with pytest.raises(InsufficientResolutionError):
            simulate_summary(spec, 0.01, 2000, [TrimMode.asymmetric(3, 0)],
                             SimConfig(epsilon=0.01), rng=15)
