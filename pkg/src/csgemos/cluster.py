"""Semi-local training pools from k-means clustering of location features.

Each location is described by ``q`` equidistant quantiles of its observed
climatology and the same quantiles of the ensemble-mean forecast error over
the training window. Features are standardized across locations before
clustering so wet locations do not dominate the distance.
"""

from __future__ import annotations

import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .ensemble import ForecastCase
from .errors import InsufficientData, UnknownLocation

log = logging.getLogger(__name__)

N_QUANTILES = 12
MAX_LLOYD_ITER = 100


class DegenerateInput(UserWarning):
    """All feature vectors coincide, so only one cluster can be formed."""


@dataclass(frozen=True)
class FeatureVector:
    location_id: str
    features: np.ndarray

    @property
    def q(self) -> int:
        return self.features.size // 2


def quantile_levels(q: int = N_QUANTILES) -> np.ndarray:
    return np.arange(1, q + 1) / (q + 1)


def feature_values(obs, ens_mean, q: int = N_QUANTILES) -> np.ndarray:
    """Climatology quantiles of ``obs`` followed by quantiles of ``ens_mean - obs``."""
    obs = np.asarray(obs, dtype=float)
    ens_mean = np.asarray(ens_mean, dtype=float)
    ok = np.isfinite(obs) & np.isfinite(ens_mean)
    obs, ens_mean = obs[ok], ens_mean[ok]
    if obs.size < q:
        raise InsufficientData(f"{obs.size} cases for {q} feature quantiles")
    levels = quantile_levels(q)
    return np.concatenate([np.quantile(obs, levels), np.quantile(ens_mean - obs, levels)])


def extract_features(location_id: str, cases: Sequence[ForecastCase], q: int = N_QUANTILES) -> FeatureVector:
    cases = [c for c in cases if c.location_id == location_id]
    obs = np.array([c.observation for c in cases])
    ens_mean = np.array([c.forecast.all_members().mean() for c in cases])
    return FeatureVector(location_id, feature_values(obs, ens_mean, q))


def standardize(x: np.ndarray):
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (x - mean) / sd, mean, sd


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    assignment: Mapping[str, int]
    inertia_history: list = field(default_factory=list)
    feature_mean: np.ndarray | None = None
    feature_sd: np.ndarray | None = None

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1] if self.inertia_history else 0.0

    def members(self, cluster: int) -> list[str]:
        return sorted(loc for loc, c in self.assignment.items() if c == cluster)


def effective_k(requested: int, n_locations: int, min_per_cluster: int = 8) -> int:
    """Cluster count capped so clusters average ``min_per_cluster`` locations."""
    return max(1, min(int(requested), n_locations // min_per_cluster))


def _sq_dist(x, centroids):
    return ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)


def _seed_centroids(x, k, rng):
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = next(i for i in range(n) if i not in chosen)
        chosen.append(idx)
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return x[chosen].copy()


def kmeans_matrix(x: np.ndarray, k: int, seed: int = 0, max_iter: int = MAX_LLOYD_ITER):
    """Lloyd's algorithm with k-means++ seeding on the rows of ``x``.

    Returns ``(labels, centroids, inertia_history)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(x, k, rng)
    labels = None
    history = []
    for _ in range(max_iter):
        d2 = _sq_dist(x, centroids)
        new_labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(n), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        point_d2 = d2[np.arange(n), labels]
        for j in range(k):
            mask = labels == j
            if mask.any():
                centroids[j] = x[mask].mean(axis=0)
            else:
                # re-seed an empty cluster at the point worst served by its centroid
                far = int(point_d2.argmax())
                centroids[j] = x[far]
                labels[far] = j
                point_d2[far] = 0.0
    d2 = _sq_dist(x, centroids)
    labels = d2.argmin(axis=1)
    return labels, centroids, history


def kmeans(features: Sequence[FeatureVector], k: int, seed: int = 0, standardize_features: bool = True) -> ClusterModel:
    """Cluster locations by their feature vectors.

    Input order does not matter: locations are sorted by id before seeding.
    If every feature vector is identical and ``k > 1`` a single-cluster model
    is returned with a :class:`DegenerateInput` warning.
    """
    feats = sorted(features, key=lambda f: f.location_id)
    if not feats:
        raise InsufficientData("no feature vectors to cluster")
    x = np.vstack([f.features for f in feats])
    mean = sd = None
    if standardize_features:
        x, mean, sd = standardize(x)
    if k > 1 and np.all(x == x[0]):
        warnings.warn(f"all {len(feats)} feature vectors identical; using one cluster instead of {k}", DegenerateInput)
        k = 1
    labels, centroids, history = kmeans_matrix(x, k, seed)
    assignment = {f.location_id: int(c) for f, c in zip(feats, labels)}
    return ClusterModel(k, centroids, assignment, history, mean, sd)


def pool_training_data(model: ClusterModel, cases: Sequence[ForecastCase]) -> dict[int, list[ForecastCase]]:
    pools: dict[int, list[ForecastCase]] = defaultdict(list)
    for case in cases:
        try:
            pools[model.assignment[case.location_id]].append(case)
        except KeyError:
            raise UnknownLocation(f"location {case.location_id!r} is not in the cluster model") from None
    return dict(pools)
