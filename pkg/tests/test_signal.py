import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughctl.errors import IncompatibleGridError, InvalidParameterError, InvalidWindowError
from roughctl.signal import (
    FbmSpec,
    GridPath,
    constant_path,
    fbm_generate,
    fbm_paths,
    from_function,
    holder_index_estimate,
    holder_seminorm,
    test_path,
)


def brute_seminorm(v, dt, mu):
    i, j = np.triu_indices(v.size, 1)
    return np.max(np.abs(v[j] - v[i]) / ((j - i) * dt) ** mu)


class TestGridPath:
    def test_times_are_exact_multiples(self):
        p = constant_path(0.0, T=3.0, N=7)
        assert all(p.times[i] == i * 3.0 / 7 for i in range(8))

    def test_values_are_read_only(self):
        p = constant_path(1.0, N=4)
        with pytest.raises(ValueError):
            p.values[0] = 2.0

    def test_rejects_nonfinite(self):
        with pytest.raises(InvalidParameterError):
            GridPath(1.0, [0.0, np.nan])

    def test_grid_mismatch(self):
        with pytest.raises(IncompatibleGridError):
            constant_path(0, N=4) + constant_path(0, N=8)

    def test_csv_round_trip(self):
        p = from_function(np.sin, 1.0, 16, 1.0)
        text = p.to_csv()
        assert text.startswith("t,value\r\n")
        q = GridPath.from_csv(text)
        assert np.array_equal(p.values, q.values)
        assert q.horizon == p.horizon


class TestHolderSeminorm:
    @pytest.mark.parametrize("mu", [0.3, 0.6, 0.9])
    def test_linear_path(self, mu):
        est = holder_seminorm(from_function(lambda t: 2.5 * t, 1.0, 64), mu)
        assert est.seminorm == pytest.approx(2.5, rel=1e-12)
        assert est.argmax == (0.0, 1.0)

    def test_constant_path(self):
        est = holder_seminorm(constant_path(-3.0, N=32), 0.5)
        assert est.seminorm == 0.0
        assert est.sup_norm == 3.0

    def test_power_path_attains_one(self):
        p = test_path("power_beta", 1.0, 2**10, beta=0.6)
        est = holder_seminorm(p, 0.6)
        assert est.seminorm == pytest.approx(1.0, rel=1e-12)
        assert est.seminorm == pytest.approx(brute_seminorm(p.values, p.dt, 0.6), rel=1e-12)

    def test_empty_window(self):
        with pytest.raises(InvalidWindowError):
            holder_seminorm(constant_path(0.0, N=8), 0.5, 0.5, 0.5)

    def test_bad_index(self):
        with pytest.raises(InvalidParameterError):
            holder_seminorm(constant_path(0.0, N=8), 1.5)

    def test_window_snaps_outward(self):
        p = from_function(lambda t: t, 1.0, 8)
        est = holder_seminorm(p, 1.0, 0.2, 0.7)
        assert est.window == (0.125, 0.75)

    def test_fast_mode_underestimates(self, fbm_1024):
        ref = holder_seminorm(fbm_1024, 0.6).seminorm
        fast = holder_seminorm(fbm_1024, 0.6, mode="fast", max_lag=8).seminorm
        assert fast <= ref

    @settings(max_examples=30, deadline=None)
    @given(
        st.lists(st.floats(-5, 5), min_size=9, max_size=9),
        st.lists(st.floats(-5, 5), min_size=9, max_size=9),
        st.floats(0.05, 1.0),
    )
    def test_reference_is_exact_and_subadditive(self, a, b, mu):
        f, g = GridPath(1.0, a), GridPath(1.0, b)
        sf, sg = holder_seminorm(f, mu).seminorm, holder_seminorm(g, mu).seminorm
        assert sf == pytest.approx(brute_seminorm(f.values, f.dt, mu), rel=1e-12, abs=1e-300)
        assert holder_seminorm(f + g, mu).seminorm <= sf + sg + 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=17, max_size=17), st.integers(0, 7), st.integers(9, 16))
    def test_window_monotone(self, vals, i, j):
        p = GridPath(1.0, vals)
        inner = holder_seminorm(p, 0.7, i / 16, j / 16).seminorm
        assert inner <= holder_seminorm(p, 0.7).seminorm + 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=9, max_size=9), st.floats(0.05, 0.5), st.floats(0.5, 1.0))
    def test_nondecreasing_in_index(self, vals, mu1, mu2):
        p = GridPath(1.0, vals)
        assert holder_seminorm(p, mu1).seminorm <= holder_seminorm(p, mu2).seminorm + 1e-12


class TestTestPaths:
    def test_power_beta_values(self):
        p = test_path("power_beta", 1.0, 64, beta=0.75)
        assert np.array_equal(p.values, (np.arange(65) / 64) ** 0.75)
        assert p.holder_index == 0.75

    def test_sine_is_lipschitz(self):
        p = test_path("sine", 1.0, 512)
        assert holder_seminorm(p, 1.0).seminorm <= 2 * math.pi + 1e-9

    def test_weierstrass_index(self):
        p = test_path("weierstrass", 1.0, 2**14, a=0.4, b=3.0)
        target = math.log(1 / 0.4) / math.log(3)
        assert p.holder_index == pytest.approx(target)
        assert abs(holder_index_estimate(p) - target) < 0.1

    def test_rough_weierstrass_rejected(self):
        with pytest.raises(InvalidParameterError):
            test_path("weierstrass", a=0.9, b=2.0)

    def test_unknown_kind(self):
        with pytest.raises(InvalidParameterError):
            test_path("spline")


class TestFbm:
    def test_bad_hurst(self):
        with pytest.raises(InvalidParameterError):
            FbmSpec(1.0)

    def test_starts_at_zero_and_deterministic(self):
        spec = FbmSpec(0.7, 1.0, 256, seed=42)
        a, b = fbm_generate(spec), fbm_generate(spec)
        assert a.values[0] == 0.0
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, fbm_generate(FbmSpec(0.7, 1.0, 256, seed=43)).values)

    def test_brownian_increment_variance(self):
        n, paths = 64, 1000
        inc = np.diff(fbm_paths(FbmSpec(0.5, 1.0, n, seed=7), paths), axis=1)
        var = inc.var()
        # variance of a sample variance of n*paths near-Gaussian values
        band = 5 * (1 / n) * math.sqrt(2 / (n * paths))
        assert abs(var - 1 / n) < band

    def test_second_moment(self):
        paths = fbm_paths(FbmSpec(0.7, 1.0, 64, seed=3), 10_000)
        for i in (16, 32, 64):
            t = i / 64
            assert np.mean(paths[:, i] ** 2) == pytest.approx(t**1.4, rel=0.05)

    def test_cholesky_fallback_matches_in_distribution(self):
        spec = FbmSpec(0.7, 1.0, 32, seed=1)
        dense = fbm_paths(spec, 4000, method="cholesky")
        assert np.mean(dense[:, -1] ** 2) == pytest.approx(1.0, rel=0.1)

    def test_empirical_index(self):
        p = fbm_generate(FbmSpec(0.7, 1.0, 2**14, seed=0))
        assert 0.55 < holder_index_estimate(p) < 0.7

    def test_declared_index_below_hurst(self):
        assert fbm_generate(FbmSpec(0.7, 1.0, 64)).holder_index < 0.7
