import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

import oracles
from experiments import GRID
from csgemos.csg import (
    CsgParams,
    GammaParams,
    csg_cdf,
    csg_crps,
    csg_crps_quadrature,
    empirical_crps,
    gamma_cdf,
    gamma_pdf,
    moments_to_params,
    weighted_crps,
)
from csgemos.errors import DomainError

# closed form at (2, 1, 0.5; y = 1), frozen from the quadrature reference
V_STAR = 0.3110016349651566

params = st.builds(CsgParams, st.floats(0.2, 30.0), st.floats(0.05, 10.0), st.floats(0.01, 5.0))


class TestGamma:
    def test_pdf_exponential(self):
        assert gamma_pdf(GammaParams(1, 1), 0.5) == pytest.approx(math.exp(-0.5), rel=1e-14)

    def test_pdf_zero_off_support(self):
        assert gamma_pdf(GammaParams(3.3, 0.7), -1.0) == 0.0
        assert gamma_pdf(GammaParams(3.3, 0.7), 0.0) == 0.0

    def test_pdf_normalized(self):
        p = GammaParams(2, 3)
        total, _ = integrate.quad(lambda x: gamma_pdf(p, x), 0, np.inf, epsabs=1e-13)
        assert total == pytest.approx(1.0, abs=1e-10)
        assert gamma_pdf(p, 1.0) == pytest.approx(math.exp(-1 / 3) / 9, rel=1e-14)

    def test_cdf_exponential(self):
        assert gamma_cdf(GammaParams(1, 1), 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-15)
        assert gamma_cdf(GammaParams(1, 1), 0.0) == 0.0

    def test_cdf_matches_integrated_pdf(self):
        p = GammaParams(2.5, 0.8)
        val, _ = integrate.quad(lambda x: gamma_pdf(p, x), 0, 2, epsabs=1e-14, epsrel=1e-14)
        assert abs(gamma_cdf(p, 2.0) - val) < 1e-10

    @given(st.floats(0.1, 50), st.floats(0.1, 10), st.lists(st.floats(-1, 200), min_size=2, max_size=20))
    def test_cdf_monotone_with_limits(self, k, th, xs):
        p = GammaParams(k, th)
        vals = gamma_cdf(p, np.sort(xs))
        assert np.all(np.diff(vals) >= -1e-15)
        assert gamma_cdf(p, np.inf) == 1.0

    def test_invalid_params(self):
        with pytest.raises(DomainError):
            GammaParams(0.0, 1.0)
        with pytest.raises(DomainError):
            CsgParams(1.0, 1.0, 0.0)


class TestMoments:
    def test_identity_point(self):
        g = moments_to_params(1, 1)
        assert (g.shape, g.scale) == (1, 1)

    def test_substitution(self):
        g = moments_to_params(4, 2)
        assert (g.shape, g.scale) == (4, 1)

    @given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
    def test_round_trip(self, mu, sigma):
        g = moments_to_params(mu, sigma)
        assert g.mean == pytest.approx(mu, rel=1e-13)
        assert g.sd == pytest.approx(sigma, rel=1e-13)
        back = moments_to_params(g.mean, g.sd)
        assert back.shape == pytest.approx(g.shape, rel=1e-12)
        assert back.scale == pytest.approx(g.scale, rel=1e-12)

    @pytest.mark.parametrize("mu,sigma", [(0, 1), (1, 0), (-1, 1), (1, -2)])
    def test_domain(self, mu, sigma):
        with pytest.raises(DomainError):
            moments_to_params(mu, sigma)


class TestCsgCdf:
    def test_negative_is_zero(self):
        assert csg_cdf(CsgParams(2, 1, 0.5), -0.1) == 0.0

    def test_zero_mass(self):
        p = CsgParams(1, 1, 0.5)
        assert csg_cdf(p, 0.0) == pytest.approx(1 - math.exp(-0.5), rel=1e-14)
        assert p.zero_mass == pytest.approx(1 - math.exp(-0.5), rel=1e-14)

    def test_limit(self):
        assert csg_cdf(CsgParams(3, 2, 1), 1e4) == 1.0

    @given(params)
    def test_jump_at_zero(self, p):
        assert csg_cdf(p, -1e-12) == 0.0
        assert csg_cdf(p, 0.0) == pytest.approx(p.zero_mass, abs=1e-15)
        # right-continuous at zero
        assert csg_cdf(p, 1e-12) - csg_cdf(p, 0.0) < 1e-9


class TestClosedForm:
    def test_regression_constant(self):
        assert csg_crps(CsgParams(2, 1, 0.5), 1.0) == pytest.approx(V_STAR, abs=1e-14)
        assert csg_crps_quadrature(CsgParams(2, 1, 0.5), 1.0) == pytest.approx(V_STAR, abs=1e-10)

    def test_grid_agreement_with_quadrature(self):
        worst = max(abs(csg_crps(CsgParams(k, t, d), y) - csg_crps_quadrature(CsgParams(k, t, d), y))
                    for k, t, d, y in GRID)
        assert worst < 1e-8

    @pytest.mark.parametrize("case", [(0.5, 0.2, 0.1, 0), (8, 5, 4, 20), (1, 1, 2, 0.1), (4, 0.5, 0.1, 5),
                                      (0.03, 40.0, 0.2, 3.0), (250.0, 0.02, 1.0, 3.9), (5e3, 1e-3, 0.5, 4.6)])
    def test_against_mpmath(self, case):
        assert csg_crps(CsgParams(*case[:3]), case[3]) == pytest.approx(oracles.csg_crps_mp(*case), abs=1e-12)

    def test_tiny_point_mass_monte_carlo(self):
        p = CsgParams(3.0, 1.5, 1e-3)
        rng = np.random.default_rng(42)
        x = oracles.csg_sample(p.shape, p.scale, p.shift, 10**7, rng)
        xp = oracles.csg_sample(p.shape, p.scale, p.shift, 10**7, rng)
        mc = np.mean(x) - 0.5 * np.mean(np.abs(x - xp))
        assert float(csg_crps(p, 0.0)) == pytest.approx(mc, abs=1e-3)

    def test_large_shift_sanity(self):
        for shift in [5.0, 20.0, 80.0]:
            p = CsgParams((shift + 2.0) ** 2, 1.0 / (shift + 2.0), shift)
            assert csg_crps(p, 1.0) >= 0.0

    def test_positive_at_median(self):
        p = CsgParams(2.0, 1.0, 0.5)
        grid = np.linspace(0, 10, 100001)
        median = grid[np.searchsorted(csg_cdf(p, grid), 0.5)]
        assert csg_crps(p, median) > 0.0

    @given(params, st.floats(0.0, 60.0), st.floats(0.05, 20.0))
    def test_scaling(self, p, y, c):
        scaled = CsgParams(p.shape, c * p.scale, c * p.shift)
        assert csg_crps(scaled, c * y) == pytest.approx(c * csg_crps(p, y), rel=1e-10, abs=1e-13)

    @given(params, st.floats(0.0, 60.0))
    def test_nonnegative_and_continuous(self, p, y):
        v = csg_crps(p, y)
        assert v >= 0.0
        assert abs(csg_crps(p, y + 1e-7) - v) < 2e-7

    @given(params)
    def test_minimized_near_median(self, p):
        ys = np.linspace(0.0, 3 * p.shape * p.scale + 5 * p.shift, 4001)
        best = ys[np.argmin(csg_crps(p, ys))]
        # the minimizer of the CRPS over y is the median of the predictive law
        assert csg_cdf(p, best) >= 0.5 - 5e-3
        if best > 0:
            assert csg_cdf(p, best - (ys[1] - ys[0]) * 2) <= 0.5 + 5e-3

    def test_vectorized(self):
        p = CsgParams(2.0, 1.0, 0.5)
        ys = np.array([0.0, 0.5, 1.0, 7.0])
        np.testing.assert_array_equal(csg_crps(p, ys), [csg_crps(p, y) for y in ys])

    def test_domain(self):
        with pytest.raises(DomainError):
            csg_crps(CsgParams(2, 1, 0.5), -0.5)
        with pytest.raises(DomainError):
            csg_crps_quadrature(CsgParams(2, 1, 0.5), np.nan)


class TestEmpirical:
    def test_two_members(self):
        assert empirical_crps([0.0, 1.0], 0.0) == pytest.approx(0.25, abs=1e-15)

    @given(st.floats(0, 100), st.floats(0, 100))
    def test_single_member(self, f, y):
        assert empirical_crps([f], y) == pytest.approx(abs(f - y), abs=1e-12)

    @given(st.lists(st.floats(0, 50), min_size=1, max_size=30), st.floats(0, 60), st.randoms())
    def test_matches_piecewise_integration_and_permutation(self, members, y, rnd):
        w = np.full(len(members), 1.0 / len(members))
        ref = oracles.step_crps(members, w, y)
        assert empirical_crps(members, y) == pytest.approx(ref, abs=1e-12)
        shuffled = list(members)
        rnd.shuffle(shuffled)
        assert empirical_crps(shuffled, y) == pytest.approx(empirical_crps(members, y), abs=1e-12)

    def test_kernel_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            f = rng.gamma(0.8, 3.0, size=rng.integers(1, 40))
            y = rng.gamma(0.8, 3.0)
            direct = np.mean(np.abs(f - y)) - 0.5 * np.mean(np.abs(f[:, None] - f[None, :]))
            assert empirical_crps(f, y) == pytest.approx(direct, abs=1e-12)

    def test_continuous_at_member(self):
        f = [0.0, 1.0, 2.5, 4.0]
        at = empirical_crps(f, 2.5)
        assert np.isfinite(at)
        assert abs(empirical_crps(f, 2.5 + 1e-9) - at) < 1e-8
        assert abs(empirical_crps(f, 2.5 - 1e-9) - at) < 1e-8

    def test_broadcast_rows(self):
        f = np.array([[0.0, 1.0], [2.0, 2.0]])
        np.testing.assert_allclose(empirical_crps(f, np.array([0.0, 1.0])), [0.25, 1.0], atol=1e-15)


class TestWeighted:
    def test_uniform_equals_empirical(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            f = rng.gamma(0.7, 2.0, size=rng.integers(1, 60))
            y = rng.gamma(0.7, 2.0)
            w = np.full(f.size, 1.0 / f.size)
            assert weighted_crps(f, w, y) == pytest.approx(empirical_crps(f, y), abs=1e-12)

    def test_point_forecast(self):
        assert weighted_crps([1.0, 3.0, 8.0], [0.0, 1.0, 0.0], 5.5) == pytest.approx(2.5, abs=1e-15)

    @given(st.lists(st.tuples(st.floats(0, 40), st.floats(0.01, 1.0)), min_size=1, max_size=25), st.floats(0, 50))
    def test_matches_piecewise_integration(self, pairs, y):
        f = np.array([p[0] for p in pairs])
        w = np.array([p[1] for p in pairs])
        w = w / w.sum()
        assert weighted_crps(f, w, y) == pytest.approx(oracles.step_crps(f, w, y), abs=1e-12)
