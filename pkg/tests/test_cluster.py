import datetime as dt
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from csgemos.cluster import (
    DegenerateInput,
    FeatureVector,
    effective_k,
    extract_features,
    feature_values,
    kmeans,
    kmeans_matrix,
    pool_training_data,
    quantile_levels,
)
from csgemos.ensemble import HIGH, EnsembleForecast, ForecastCase, MemberGroup
from csgemos.errors import InsufficientData, UnknownLocation

DAY0 = dt.date(2016, 6, 1)


def cases_for(loc, obs, fcst):
    out = []
    for i, (y, f) in enumerate(zip(obs, fcst)):
        fc = EnsembleForecast(loc, DAY0 + dt.timedelta(days=i), 30, (MemberGroup(HIGH, [f]),))
        out.append(ForecastCase(fc, float(y)))
    return out


class TestFeatures:
    def test_constant_perfect(self):
        fv = extract_features("a", cases_for("a", [2.0] * 30, [2.0] * 30))
        np.testing.assert_array_equal(fv.features, [2.0] * 12 + [0.0] * 12)
        assert fv.q == 12

    def test_dry_with_unit_error(self):
        fv = extract_features("a", cases_for("a", [0.0] * 30, [1.0] * 30))
        np.testing.assert_array_equal(fv.features, [0.0] * 12 + [1.0] * 12)

    @given(st.lists(st.tuples(st.floats(0, 80), st.floats(0, 80)), min_size=12, max_size=60))
    def test_matches_sort_and_interpolate(self, rows):
        obs = np.array([r[0] for r in rows])
        fc = np.array([r[1] for r in rows])
        got = feature_values(obs, fc)
        levels = quantile_levels()
        ref = [oracles.sorted_interp_quantile(obs, p) for p in levels]
        ref += [oracles.sorted_interp_quantile(fc - obs, p) for p in levels]
        np.testing.assert_allclose(got, ref, rtol=0, atol=1e-12)
        assert got.size == 24
        assert np.all(np.diff(got[:12]) >= 0) and np.all(np.diff(got[12:]) >= 0)

    def test_levels(self):
        np.testing.assert_allclose(quantile_levels(3), [0.25, 0.5, 0.75])

    def test_insufficient(self):
        with pytest.raises(InsufficientData):
            extract_features("a", cases_for("a", [1.0] * 11, [1.0] * 11))

    def test_other_locations_ignored(self):
        cases = cases_for("a", [0.0] * 20, [0.0] * 20) + cases_for("b", [9.0] * 20, [9.0] * 20)
        assert extract_features("a", cases).features.max() == 0.0


def blobs(seed=0, n=40):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 1.0, size=(n, 24))
    b = rng.normal(12.0, 1.0, size=(n, 24))
    feats = [FeatureVector(f"p{i:03d}", v) for i, v in enumerate(np.vstack([a, b]))]
    truth = {f"p{i:03d}": int(i >= n) for i in range(2 * n)}
    return feats, truth


class TestKMeans:
    def test_two_blobs(self):
        feats, truth = blobs()
        model = kmeans(feats, 2, seed=3)
        same = [model.assignment[k] == v for k, v in truth.items()]
        assert all(same) or not any(same)

    def test_k_equals_n(self):
        rng = np.random.default_rng(1)
        feats = [FeatureVector(f"l{i}", rng.normal(size=24)) for i in range(10)]
        model = kmeans(feats, 10, seed=0)
        assert sorted(model.assignment.values()) == list(range(10))
        assert model.inertia == pytest.approx(0.0, abs=1e-20)

    def test_deterministic(self):
        feats, _ = blobs(seed=5)
        a, b = kmeans(feats, 4, seed=9), kmeans(feats, 4, seed=9)
        assert a.assignment == b.assignment
        np.testing.assert_array_equal(a.centroids, b.centroids)
        assert a.inertia_history == b.inertia_history

    @given(st.integers(0, 10_000), st.integers(1, 6), st.randoms())
    def test_order_invariance_and_monotone_objective(self, seed, k, rnd):
        rng = np.random.default_rng(seed)
        feats = [FeatureVector(f"l{i:02d}", rng.gamma(1.0, 2.0, size=24)) for i in range(30)]
        shuffled = list(feats)
        rnd.shuffle(shuffled)
        a, b = kmeans(feats, k, seed=seed), kmeans(shuffled, k, seed=seed)
        assert a.assignment == b.assignment
        hist = np.array(a.inertia_history)
        assert np.all(np.diff(hist) <= 1e-9 * max(1.0, hist[0]))

    @given(st.integers(0, 10_000), st.integers(1, 8))
    def test_nearest_centroid(self, seed, k):
        x = np.random.default_rng(seed).normal(size=(25, 5))
        labels, centroids, _ = kmeans_matrix(x, k, seed)
        d2 = ((x[:, None, :] - centroids[None]) ** 2).sum(-1)
        np.testing.assert_array_equal(labels, d2.argmin(axis=1))

    def test_degenerate(self):
        feats = [FeatureVector(f"l{i}", np.ones(24)) for i in range(6)]
        with pytest.warns(DegenerateInput):
            model = kmeans(feats, 3)
        assert model.k == 1 and set(model.assignment.values()) == {0}

    def test_bad_k(self):
        with pytest.raises(ValueError):
            kmeans_matrix(np.zeros((3, 2)), 4)
        with pytest.raises(InsufficientData):
            kmeans([], 2)

    def test_effective_k(self):
        assert effective_k(8000, 100) == 12
        assert effective_k(3, 100) == 3
        assert effective_k(5, 7) == 1


class TestPools:
    def setup_method(self):
        self.cases = []
        for loc in ["a", "b", "c", "d"]:
            self.cases += cases_for(loc, np.arange(15.0), np.arange(15.0) + ord(loc))
        self.feats = [extract_features(loc, self.cases) for loc in "abcd"]

    def test_single_pool(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateInput)
            pools = pool_training_data(kmeans(self.feats, 1), self.cases)
        assert list(pools) == [0] and pools[0] == self.cases

    def test_local_pools(self):
        model = kmeans(self.feats, 4)
        pools = pool_training_data(model, self.cases)
        for cluster, cases in pools.items():
            assert len({c.location_id for c in cases}) == 1
        assert sum(len(v) for v in pools.values()) == len(self.cases)

    def test_unknown_location(self):
        model = kmeans(self.feats, 2)
        with pytest.raises(UnknownLocation):
            pool_training_data(model, cases_for("zzz", [1.0], [1.0]))

    @given(st.integers(1, 4), st.integers(0, 100))
    def test_partition(self, k, seed):
        pools = pool_training_data(kmeans(self.feats, k, seed=seed), self.cases)
        flat = sorted((id(c) for v in pools.values() for c in v))
        assert flat == sorted(id(c) for c in self.cases)
