import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughctl.errors import IncompatibleGridError, InvalidParameterError
from roughctl.signal import FbmSpec, GridPath, constant_path, fbm_generate, from_function, test_path
from roughctl.young import YoungIntegrand, young_fractional, young_riemann, young_riemann_path


def sine_path(n):
    return test_path("sine", 1.0, n)


class TestRiemann:
    def test_constant_integrand_telescopes(self, fbm_1024):
        yi = YoungIntegrand(constant_path(1.7, 1.0, 1024), fbm_1024)
        for rule in ("left", "trapezoid"):
            assert young_riemann(yi, rule) == pytest.approx(1.7 * fbm_1024.values[-1], rel=1e-12)

    def test_chain_rule_on_fbm(self, fbm_4096):
        g = fbm_4096
        exact = 0.5 * (g.values[-1] ** 2 - g.values[0] ** 2)
        assert young_riemann(YoungIntegrand(g, g)) == pytest.approx(exact, rel=1e-3)

    def test_left_rule_carries_quadratic_variation(self, fbm_4096):
        g = fbm_4096
        exact = 0.5 * (g.values[-1] ** 2 - g.values[0] ** 2)
        left = young_riemann(YoungIntegrand(g, g), "left")
        assert left == pytest.approx(exact - 0.5 * np.sum(np.diff(g.values) ** 2), rel=1e-12)

    def test_t_dt(self):
        n = 256
        t = from_function(lambda s: s, 1.0, n, 1.0)
        assert abs(young_riemann(YoungIntegrand(t, t), "left") - 0.5) <= 1 / n

    def test_grid_mismatch(self):
        with pytest.raises(IncompatibleGridError):
            YoungIntegrand(constant_path(1, N=8), constant_path(1, N=16))

    def test_young_condition(self):
        f = GridPath(1.0, np.zeros(9), 0.4)
        with pytest.raises(InvalidParameterError):
            YoungIntegrand(f, f)

    def test_running_integral_ends_at_total(self, fbm_1024):
        f = from_function(np.cos, 1.0, 1024, 1.0)
        run = young_riemann_path(f, fbm_1024, "left")
        assert run.values[-1] == pytest.approx(young_riemann(YoungIntegrand(f, fbm_1024), "left"), rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(
        st.lists(st.floats(-3, 3), min_size=17, max_size=17),
        st.lists(st.floats(-3, 3), min_size=17, max_size=17),
        st.lists(st.floats(-3, 3), min_size=17, max_size=17),
        st.integers(1, 15),
    )
    def test_additive_and_bilinear(self, a, b, c, k):
        f, f2, g = GridPath(1.0, a), GridPath(1.0, b), GridPath(1.0, c)
        whole = young_riemann(YoungIntegrand(f, g))
        split = young_riemann(YoungIntegrand(f, g, 0, k / 16)) + young_riemann(YoungIntegrand(f, g, k / 16, 1))
        assert split == pytest.approx(whole, abs=1e-12)
        lin = young_riemann(YoungIntegrand(f + 2.0 * f2, g))
        parts = young_riemann(YoungIntegrand(f, g)) + 2.0 * young_riemann(YoungIntegrand(f2, g))
        assert lin == pytest.approx(parts, abs=1e-11)


class TestFractional:
    def test_constant_integrand(self, fbm_1024):
        yi = YoungIntegrand(constant_path(1.0, 1.0, 1024), fbm_1024)
        inc = fbm_1024.values[-1] - fbm_1024.values[0]
        for alpha in yi.alpha_grid(3):
            assert young_fractional(yi, alpha) == pytest.approx(inc, rel=1e-2)

    def test_alpha_independence_and_route_agreement(self):
        g = test_path("power_beta", 1.0, 2**12, beta=0.75)
        f = from_function(np.sin, 1.0, 2**12, 1.0)
        yi = YoungIntegrand(f, g)
        vals = [young_fractional(yi, a) for a in (0.3, 0.4, 0.5)]
        fine = 2**14
        oracle = young_riemann(
            YoungIntegrand(from_function(np.sin, 1.0, fine, 1.0), test_path("power_beta", 1.0, fine, beta=0.75))
        )
        assert max(vals) - min(vals) <= 1e-2 * abs(oracle)
        for v in vals:
            assert v == pytest.approx(oracle, rel=1e-2)

    def test_chain_rule_on_sine(self):
        g = sine_path(2**10)
        g = GridPath(1.0, g.values + 0.5 * np.arange(g.values.size) / g.n_steps, 1.0)
        exact = 0.5 * (g.values[-1] ** 2 - g.values[0] ** 2)
        yi = YoungIntegrand(g, g)
        assert young_fractional(yi, 0.5) == pytest.approx(exact, rel=1e-2)

    def test_subwindow(self, fbm_1024):
        f = from_function(np.sin, 1.0, 1024, 1.0)
        yi = YoungIntegrand(f, fbm_1024, 0.25, 0.75)
        ref = young_riemann(yi)
        assert abs(young_fractional(yi, 0.5) - ref) <= max(1e-2 * abs(ref), 1e-4)

    def test_additivity(self, fbm_1024):
        f = from_function(np.cos, 1.0, 1024, 1.0)
        whole = young_fractional(YoungIntegrand(f, fbm_1024), 0.5)
        left = young_fractional(YoungIntegrand(f, fbm_1024, 0, 0.5), 0.5)
        right = young_fractional(YoungIntegrand(f, fbm_1024, 0.5, 1), 0.5)
        assert left + right == pytest.approx(whole, rel=1e-3)

    def test_bilinear(self, fbm_1024):
        f1 = from_function(np.cos, 1.0, 1024, 1.0)
        f2 = from_function(lambda t: t**2, 1.0, 1024, 1.0)
        g2 = from_function(np.sin, 1.0, 1024, 1.0)
        one = lambda f, g: young_fractional(YoungIntegrand(f, g), 0.5)
        combo = one(f1 + 3.0 * f2, fbm_1024 - 2.0 * g2)
        parts = one(f1, fbm_1024) + 3 * one(f2, fbm_1024) - 2 * one(f1, g2) - 6 * one(f2, g2)
        assert combo == pytest.approx(parts, rel=1e-10)

    def test_inadmissible_alpha(self, fbm_1024):
        yi = YoungIntegrand(fbm_1024, fbm_1024)
        lo, hi = yi.admissible_alphas()
        with pytest.raises(InvalidParameterError):
            young_fractional(yi, lo - 0.01)
        with pytest.raises(InvalidParameterError):
            young_fractional(yi, hi + 0.01)

    def test_undeclared_index(self):
        f = GridPath(1.0, np.linspace(0, 1, 17))
        with pytest.raises(InvalidParameterError):
            YoungIntegrand(f, f).admissible_alphas()

    @pytest.mark.parametrize("seed", [0, 1])
    def test_fbm_route_agreement(self, seed):
        g = fbm_generate(FbmSpec(0.7, 1.0, 2**12, seed))
        yi = YoungIntegrand(g, g)
        ref = young_riemann(yi)
        vals = [young_fractional(yi, a) for a in yi.alpha_grid(5)]
        # spread scale floors at 1e-2 so that 1e-2 * scale matches the 1e-4 absolute floor
        scale = max(abs(ref), 1e-2)
        assert max(vals) - min(vals) <= 1e-2 * scale
        for v in vals:
            assert abs(v - ref) <= max(1e-2 * abs(ref), 1e-4)
