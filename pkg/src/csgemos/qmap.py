"""Quantile mapping (QM) and weighted quantile mapping (QM+W).

QM replaces each forecast member ``f`` by ``F_o^{-1}(F_f(f))`` using
climatological CDFs of forecasts and observations. QM+W additionally weights
the sorted, mapped members with beta-distribution weights fitted to
closest-member rank histograms of mapped reforecasts.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .csg import weighted_crps
from .errors import InsufficientData

log = logging.getLogger(__name__)

MIN_CLIM_SAMPLES = 30


class DegenerateHistogram(UserWarning):
    """All histogram mass sits in one bin; no beta law can be moment-matched."""


@dataclass(frozen=True)
class ClimCdf:
    """Empirical climatological CDF of a sample of amounts.

    ``cdf`` is the step function ``#(sample <= x) / n``. ``quantile`` and
    ``cdf_continuous`` interpolate linearly through the points
    ``(x_(i), i/n)`` taken at the last of any tied order statistics, so they
    are exact inverses of each other on the sample range.
    """

    sample: np.ndarray
    knots_x: np.ndarray = field(repr=False)
    knots_p: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.sample.size

    def cdf(self, x):
        return np.searchsorted(self.sample, np.asarray(x, dtype=float), side="right") / self.n

    def cdf_continuous(self, x):
        x = np.asarray(x, dtype=float)
        out = _interp(x, self.knots_x, self.knots_p)
        return np.where(x < self.knots_x[0], 0.0, out)

    def quantile(self, p):
        return _interp(np.asarray(p, dtype=float), self.knots_p, self.knots_x)


def _interp(x, xp, fp):
    # np.interp goes through a precomputed slope, which breaks monotonicity
    # when knots are subnormally close; a clipped fraction cannot
    x = np.asarray(x, dtype=float)
    if xp.size == 1:
        return np.full(x.shape, fp[0])
    j = np.clip(np.searchsorted(xp, x, side="right") - 1, 0, xp.size - 2)
    t = np.clip((x - xp[j]) / (xp[j + 1] - xp[j]), 0.0, 1.0)
    return fp[j] + t * (fp[j + 1] - fp[j])


def build_clim_cdf(samples, min_samples: int = MIN_CLIM_SAMPLES) -> ClimCdf:
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    s = s[np.isfinite(s)]
    if s.size < min_samples:
        raise InsufficientData(f"{s.size} climatology samples, need {min_samples}")
    if s[0] < 0:
        raise ValueError("climatology samples must be non-negative")
    knots_x, last = np.unique(s[::-1], return_index=True)
    knots_p = (s.size - last) / s.size
    return ClimCdf(s, knots_x, knots_p)


def quantile_map(f, fcst_clim: ClimCdf, obs_clim: ClimCdf):
    """Map forecast amounts onto the observation climatology."""
    return obs_clim.quantile(fcst_clim.cdf_continuous(f))


# -- closest-member histograms and beta weights -----------------------------

@dataclass(frozen=True)
class ClosestMemberHistogram:
    counts: np.ndarray
    mean_bin: int = 0

    @property
    def n_bins(self) -> int:
        return self.counts.size

    @property
    def total(self) -> float:
        return float(self.counts.sum())


def closest_member_ranks(sorted_members, analyses) -> np.ndarray:
    """0-based rank of the sorted member nearest each analysis (ties to the lower rank)."""
    m = np.asarray(sorted_members, dtype=float)
    a = np.asarray(analyses, dtype=float)
    return np.argmin(np.abs(m - a[..., None]), axis=-1)


def build_closest_member_histogram(sorted_members, analyses, mean_bin: int = 0) -> ClosestMemberHistogram:
    m = np.atleast_2d(np.asarray(sorted_members, dtype=float))
    ranks = closest_member_ranks(m, np.atleast_1d(analyses))
    return ClosestMemberHistogram(np.bincount(ranks, minlength=m.shape[-1]).astype(float), mean_bin)


@dataclass(frozen=True)
class BetaFit:
    alpha: float
    beta: float
    degenerate: bool = False


def beta_moments_fit(hist: ClosestMemberHistogram) -> BetaFit:
    """Moment-matched beta law for a rank histogram.

    Each bin is treated as uniform mass on its sub-interval of [0, 1], so a
    flat histogram has variance exactly 1/12 and maps to beta(1, 1).
    """
    if hist.total <= 0:
        raise ValueError("histogram has no counts")
    n = hist.n_bins
    p = hist.counts / hist.total
    centers = (np.arange(1, n + 1) - 0.5) / n
    mean = float(np.sum(p * centers))
    var = float(np.sum(p * (centers - mean) ** 2)) + 1.0 / (12.0 * n * n)
    if np.count_nonzero(hist.counts) == 1:
        return BetaFit(np.nan, np.nan, True)
    common = mean * (1.0 - mean) / var - 1.0
    return BetaFit(mean * common, (1.0 - mean) * common)


def _smoothed_one_hot(hist: ClosestMemberHistogram, target_size: int) -> np.ndarray:
    pos = (int(np.argmax(hist.counts)) + 0.5) / hist.n_bins
    j = min(int(pos * target_size), target_size - 1)
    w = np.zeros(target_size)
    w[j] = 0.5
    for nb in (j - 1, j + 1):
        if 0 <= nb < target_size:
            w[nb] = 0.25
    return w / w.sum()


def fit_beta_weights(hist: ClosestMemberHistogram, target_size: int) -> np.ndarray:
    """Weights for the sorted members of a ``target_size`` ensemble.

    Weight ``i`` is the beta probability of the i-th of ``target_size`` equal
    sub-intervals of [0, 1].
    """
    if target_size < 1:
        raise ValueError("target ensemble must have at least one member")
    fit_ = beta_moments_fit(hist)
    if fit_.degenerate:
        warnings.warn("closest-member histogram has a single occupied bin; using smoothed one-hot weights",
                      DegenerateHistogram)
        return _smoothed_one_hot(hist, target_size)
    edges = np.linspace(0.0, 1.0, target_size + 1)
    w = np.diff(stats.beta.cdf(edges, fit_.alpha, fit_.beta))
    return w / w.sum()


def combine_group_weights(weights: list) -> np.ndarray:
    """Concatenate per-group weights, each scaled by the group's member share."""
    weights = [np.asarray(w, dtype=float) for w in weights if len(w)]
    total_members = sum(w.size for w in weights)
    parts = [w / w.sum() * (w.size / total_members) for w in weights]
    out = np.concatenate(parts)
    return out / out.sum()


@dataclass(frozen=True)
class WeightedEnsemble:
    """Weighted empirical step CDF of an ensemble."""

    members: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.members, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if m.shape != w.shape:
            raise ValueError("members and weights differ in length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to one")
        order = np.argsort(m, kind="stable")
        object.__setattr__(self, "members", m[order])
        object.__setattr__(self, "weights", w[order])

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        return np.minimum(cum[np.searchsorted(self.members, x, side="right")], 1.0)

    def crps(self, y):
        return weighted_crps(self.members, self.weights, y)


def weighted_ensemble_cdf(sorted_members, weights) -> WeightedEnsemble:
    return WeightedEnsemble(np.asarray(sorted_members, dtype=float), np.asarray(weights, dtype=float))
