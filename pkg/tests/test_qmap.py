import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

import oracles
from csgemos.csg import empirical_crps
from csgemos.errors import InsufficientData
from csgemos.qmap import (
    ClosestMemberHistogram,
    DegenerateHistogram,
    beta_moments_fit,
    build_clim_cdf,
    build_closest_member_histogram,
    combine_group_weights,
    fit_beta_weights,
    quantile_map,
    weighted_ensemble_cdf,
)

samples = st.lists(st.floats(0, 100), min_size=30, max_size=120)


class TestClimCdf:
    def test_hand_count(self):
        c = build_clim_cdf([0, 1, 2, 3], min_samples=4)
        assert c.cdf(1.5) == 0.5

    @given(samples)
    def test_round_trip_on_support(self, s):
        c = build_clim_cdf(s)
        for x in np.unique(s):
            assert c.quantile(c.cdf(x)) == pytest.approx(x, abs=1e-12)

    def test_dry_climate(self):
        c = build_clim_cdf(np.zeros(40))
        np.testing.assert_array_equal(c.quantile(np.linspace(0, 1, 11)), 0.0)

    @given(samples)
    def test_quantile_clamped_and_monotone(self, s):
        c = build_clim_cdf(s)
        q = c.quantile(np.linspace(0, 1, 101))
        assert np.all(np.diff(q) >= 0)
        assert q[0] >= min(s) and q[-1] == max(s)

    def test_invalid(self):
        with pytest.raises(InsufficientData):
            build_clim_cdf(np.ones(29))
        with pytest.raises(ValueError):
            build_clim_cdf(np.r_[np.ones(40), -1.0])


class TestQuantileMap:
    @given(samples, st.lists(st.floats(0, 150), min_size=1, max_size=20))
    def test_identity_under_equal_climates(self, s, f):
        c = build_clim_cdf(s)
        mapped = quantile_map(f, c, c)
        inside = (np.asarray(f) >= min(s)) & (np.asarray(f) <= max(s))
        np.testing.assert_allclose(mapped[inside], np.asarray(f)[inside], atol=1e-9)
        # idempotent
        np.testing.assert_allclose(quantile_map(mapped, c, c), mapped, atol=1e-9)

    def test_scale_bias_removal(self):
        obs = np.linspace(0, 10, 101)
        fc = 2 * obs
        assert quantile_map(4.0, build_clim_cdf(fc), build_clim_cdf(obs)) == pytest.approx(2.0, abs=1e-12)

    @given(st.floats(0.2, 5), st.lists(st.floats(0, 50), min_size=1, max_size=30))
    def test_multiplicative_bias_exactly_removed(self, factor, f):
        rng = np.random.default_rng(0)
        obs = np.sort(rng.gamma(0.8, 4.0, 500))
        fo, ff = build_clim_cdf(obs), build_clim_cdf(factor * obs)
        x = np.clip(np.asarray(f), factor * obs.min(), factor * obs.max())
        np.testing.assert_allclose(quantile_map(x, ff, fo), x / factor, rtol=1e-9, atol=1e-9)

    @given(samples, samples, st.lists(st.floats(0, 120), min_size=2, max_size=30))
    def test_monotone_and_in_range(self, s1, s2, f):
        ff, fo = build_clim_cdf(s1), build_clim_cdf(s2)
        f = np.sort(f)
        mapped = quantile_map(f, ff, fo)
        assert np.all(np.diff(mapped) >= 0)
        assert mapped.min() >= min(s2) and mapped.max() <= max(s2)


def brute_force_ranks(members, analyses):
    out = []
    for row, a in zip(members, analyses):
        best, best_d = 0, abs(row[0] - a)
        for i, v in enumerate(row):
            if abs(v - a) < best_d:
                best, best_d = i, abs(v - a)
        out.append(best)
    return np.bincount(out, minlength=members.shape[1])


class TestClosestMember:
    def test_below_all_members(self):
        h = build_closest_member_histogram([1.0, 2.0, 3.0], 0.2)
        np.testing.assert_array_equal(h.counts, [1, 0, 0])

    def test_ties_go_low(self):
        h = build_closest_member_histogram([1.0, 2.0, 3.0], 1.5)
        np.testing.assert_array_equal(h.counts, [1, 0, 0])

    def test_calibrated_matches_exchangeable_null(self):
        # the closest-member histogram of an exchangeable ensemble is not flat:
        # analyses outside the ensemble range all fall to the end members
        rng = np.random.default_rng(1)
        m = np.sort(rng.gamma(0.7, 3.0, size=(4000, 11)), axis=1)
        a = rng.gamma(0.7, 3.0, size=4000)
        h = build_closest_member_histogram(m, a).counts
        ref_m = np.sort(rng.gamma(0.7, 3.0, size=(4000, 11)), axis=1)
        ref = brute_force_ranks(ref_m, rng.gamma(0.7, 3.0, size=4000))
        assert stats.chi2_contingency(np.vstack([h, ref]))[1] > 0.01
        assert h[0] > h[1:-1].mean() and h[-1] > h[1:-1].mean()

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        m = np.sort(rng.gamma(0.7, 3.0, size=(300, 11)), axis=1)
        a = rng.gamma(0.7, 3.0, size=300)
        np.testing.assert_array_equal(build_closest_member_histogram(m, a).counts, brute_force_ranks(m, a))

    def test_underdispersed_is_u_shaped(self):
        rng = np.random.default_rng(3)
        centre = rng.normal(size=5000)
        m = np.sort(centre[:, None] + 0.4 * rng.normal(size=(5000, 11)), axis=1)
        a = centre + rng.normal(size=5000)
        h = build_closest_member_histogram(m, a).counts
        interior = h[1:-1].mean()
        assert h[0] + h[-1] > 2 * interior
        assert min(h[0], h[-1]) > 2 * interior


class TestBetaWeights:
    def test_flat(self):
        h = ClosestMemberHistogram(np.full(11, 7.0))
        fit = beta_moments_fit(h)
        assert fit.alpha == pytest.approx(1.0, abs=1e-12) and fit.beta == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(fit_beta_weights(h, 51), 1 / 51, atol=1e-12)

    def test_symmetric_u(self):
        counts = np.array([30, 8, 5, 4, 3, 3, 3, 4, 5, 8, 30], dtype=float)
        h = ClosestMemberHistogram(counts)
        fit = beta_moments_fit(h)
        # moment matching by hand: mean 1/2, variance of bin-uniform mixture
        centers = (np.arange(11) + 0.5) / 11
        p = counts / counts.sum()
        var = np.sum(p * (centers - 0.5) ** 2) + 1 / (12 * 121)
        expected = 0.25 / var - 1
        assert fit.alpha == pytest.approx(fit.beta, rel=1e-12)
        assert fit.alpha == pytest.approx(0.5 * expected, rel=1e-12) and fit.alpha < 1
        w = fit_beta_weights(h, 51)
        assert w[0] > 1 / 51 and w[-1] > 1 / 51

    @pytest.mark.parametrize("m", [51, 201, 1, 40])
    def test_normalized(self, m):
        rng = np.random.default_rng(m)
        w = fit_beta_weights(ClosestMemberHistogram(rng.integers(1, 50, size=11).astype(float)), m)
        assert w.size == m and abs(w.sum() - 1) < 1e-12 and np.all(w >= 0)

    def test_degenerate(self):
        h = ClosestMemberHistogram(np.r_[np.zeros(10), 5.0])
        with pytest.warns(DegenerateHistogram):
            w = fit_beta_weights(h, 51)
        # the occupied bin centre 10.5/11 falls on member 48 of 51
        assert abs(w.sum() - 1) < 1e-12 and w.argmax() == 48
        assert w[47] == w[49] == 0.5 * w[48]

    def test_combined_groups(self):
        w = combine_group_weights([np.full(10, 0.1), np.full(30, 1 / 30)])
        assert w.size == 40 and abs(w.sum() - 1) < 1e-12
        np.testing.assert_allclose(w, 1 / 40)
        assert combine_group_weights([np.array([1.0]), np.array([])]).tolist() == [1.0]


class TestWeightedCdf:
    @given(st.lists(st.floats(0, 50), min_size=1, max_size=40), st.floats(0, 60))
    def test_uniform_reduces_to_empirical(self, m, y):
        w = np.full(len(m), 1 / len(m))
        w[-1] = 1 - w[:-1].sum()
        ens = weighted_ensemble_cdf(np.sort(m), w)
        assert ens.crps(y) == pytest.approx(empirical_crps(m, y), abs=1e-12)

    def test_point_forecast(self):
        ens = weighted_ensemble_cdf([1.0, 2.0, 6.0], [0.0, 0.0, 1.0])
        assert ens.crps(2.5) == pytest.approx(3.5, abs=1e-15)

    def test_piecewise_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(40):
            m = np.sort(rng.gamma(0.7, 3.0, size=rng.integers(1, 50)))
            w = rng.dirichlet(np.ones(m.size))
            y = rng.gamma(0.7, 3.0)
            assert weighted_ensemble_cdf(m, w).crps(y) == pytest.approx(oracles.step_crps(m, w, y), abs=1e-12)

    def test_cdf_steps(self):
        ens = weighted_ensemble_cdf([1.0, 2.0], [0.25, 0.75])
        np.testing.assert_allclose(ens.cdf([0.5, 1.0, 1.5, 2.0, 9.0]), [0, 0.25, 0.25, 1.0, 1.0])

    def test_invalid(self):
        with pytest.raises(ValueError):
            weighted_ensemble_cdf([1.0, 2.0], [0.5, 0.6])
        with pytest.raises(ValueError):
            weighted_ensemble_cdf([1.0, 2.0], [1.0])
