"""Verification scores, skill scores, reliability and significance tests."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats

from .csg import CsgParams, csg_cdf, csg_crps, empirical_crps
from .errors import InsufficientSeries, ZeroReference
from .qmap import WeightedEnsemble

DEFAULT_THRESHOLDS = (0.1, 5.0, 10.0)


# -- predictive CDFs ----------------------------------------------------------

def cdf_function(forecast) -> Callable:
    """Callable CDF for a CSG law, a weighted ensemble, raw members or a callable."""
    if isinstance(forecast, CsgParams):
        return lambda x: csg_cdf(forecast, x)
    if isinstance(forecast, WeightedEnsemble):
        return forecast.cdf
    if callable(forecast):
        return forecast
    members = np.sort(np.asarray(forecast, dtype=float))
    return lambda x: np.searchsorted(members, np.asarray(x, dtype=float), side="right") / members.size


def crps_of(forecast, y: float) -> float:
    if isinstance(forecast, CsgParams):
        return float(csg_crps(forecast, y))
    if isinstance(forecast, WeightedEnsemble):
        return float(forecast.crps(y))
    return float(empirical_crps(forecast, y))


def _breakpoints(forecast) -> np.ndarray:
    if isinstance(forecast, WeightedEnsemble):
        return forecast.members
    if isinstance(forecast, CsgParams) or callable(forecast):
        return np.array([])
    return np.sort(np.asarray(forecast, dtype=float))


# -- scores -----------------------------------------------------------------

def brier_from_prob(prob_below, threshold, obs):
    """Brier score from the forecast probability of not exceeding ``threshold``."""
    outcome = (np.asarray(threshold) >= np.asarray(obs)).astype(float)
    return (np.asarray(prob_below, dtype=float) - outcome) ** 2


def brier_score(forecast, y_threshold: float, x: float):
    if y_threshold < 0:
        raise ValueError("threshold must be non-negative")
    return brier_from_prob(cdf_function(forecast)(y_threshold), y_threshold, x)


def _skill(mean, mean_ref):
    if not mean_ref > 0:
        raise ZeroReference(f"reference mean score must be positive, got {mean_ref}")
    return 1.0 - mean / mean_ref


def crpss(mean_crps: float, mean_crps_ref: float) -> float:
    return _skill(mean_crps, mean_crps_ref)


def bss(mean_bs: float, mean_bs_ref: float) -> float:
    return _skill(mean_bs, mean_bs_ref)


@dataclass(frozen=True)
class ConsistencyDiagnostic:
    crps: float
    integrated_brier: float

    @property
    def abs_diff(self) -> float:
        return abs(self.crps - self.integrated_brier)


def crps_bs_consistency_check(forecast, x: float, tail: float = 1e-14) -> ConsistencyDiagnostic:
    """Compare the CRPS with the Brier score integrated over all thresholds."""
    cdf = cdf_function(forecast)

    def bs(y):
        return float(brier_from_prob(cdf(y), y, x))

    upper = max(x, 1.0)
    brk = _breakpoints(forecast)
    if brk.size:
        upper = max(upper, brk[-1])
    else:
        while 1.0 - float(cdf(upper)) > tail:
            upper *= 2.0
    # thresholds below zero contribute nothing: F = 0 and x >= 0
    knots = np.unique(np.concatenate([[0.0, x, upper], brk[(brk > 0) & (brk < upper)]]))
    total = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        val, _ = integrate.quad(bs, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
        total += val
    return ConsistencyDiagnostic(crps_of(forecast, x), total)


# -- score series -------------------------------------------------------------

@dataclass
class ScoreSeries:
    """Per-case scores keyed by location and valid date."""

    locations: list
    dates: list
    values: np.ndarray  # [location, date], NaN where no case
    kind: str = "crps"
    threshold: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.locations), len(self.dates)):
            raise ValueError("score matrix does not match locations x dates")
        finite = self.values[np.isfinite(self.values)]
        if finite.size and finite.min() < 0:
            raise ValueError("scores must be non-negative")

    @classmethod
    def from_entries(cls, entries: Sequence[tuple], kind="crps", threshold=None) -> "ScoreSeries":
        locs = sorted({e[0] for e in entries})
        dates = sorted({e[1] for e in entries})
        li = {v: i for i, v in enumerate(locs)}
        di = {v: i for i, v in enumerate(dates)}
        values = np.full((len(locs), len(dates)), np.nan)
        for loc, day, v in entries:
            if not np.isnan(values[li[loc], di[day]]):
                raise ValueError(f"duplicate score for {loc} on {day}")
            values[li[loc], di[day]] = v
        return cls(locs, dates, values, kind, threshold)

    def mean(self) -> float:
        return float(np.nanmean(self.values))


# -- reliability --------------------------------------------------------------

@dataclass(frozen=True)
class ReliabilityDiagram:
    edges: np.ndarray
    mean_prob: np.ndarray
    obs_freq: np.ndarray
    count: np.ndarray

    @property
    def total(self) -> int:
        return int(self.count.sum())

    @property
    def log10_freq(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            rel = self.count / max(self.total, 1)
            return np.where(self.count > 0, np.log10(np.where(rel > 0, rel, 1.0)), np.nan)


def reliability(probs, outcomes, n_bins: int = 10) -> ReliabilityDiagram:
    """Bin forecast event probabilities and compare with event frequencies.

    Empty bins carry count 0 and NaN mean probability/frequency.
    """
    p = np.asarray(probs, dtype=float).ravel()
    o = np.asarray(outcomes, dtype=float).ravel()
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    # rounding keeps probabilities such as 0.3 in the bin they open
    idx = np.clip(np.floor(np.round(p * n_bins, 9)).astype(int), 0, n_bins - 1)
    count = np.bincount(idx, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_prob = np.bincount(idx, weights=p, minlength=n_bins) / count
        obs_freq = np.bincount(idx, weights=o, minlength=n_bins) / count
    return ReliabilityDiagram(edges, mean_prob, obs_freq, count)


# -- stationary bootstrap -----------------------------------------------------

def default_block_length(n: int) -> int:
    return max(1, math.ceil(n ** (1.0 / 3.0)))


def stationary_bootstrap_indices(n: int, n_boot: int, mean_block_length: float, rng: np.random.Generator) -> np.ndarray:
    """Time indices of stationary-bootstrap resamples, shape ``(n_boot, n)``.

    Blocks wrap around the end of the series; block lengths are geometric
    with the given mean.
    """
    starts = rng.integers(0, n, size=(n_boot, n))
    new_block = rng.random((n_boot, n)) < 1.0 / mean_block_length
    new_block[:, 0] = True
    t = np.arange(n)
    last_start = np.maximum.accumulate(np.where(new_block, t, 0), axis=1)
    offset = t - last_start
    return (np.take_along_axis(starts, last_start, axis=1) + offset) % n


def _time_matrix(series) -> np.ndarray:
    if isinstance(series, ScoreSeries):
        return series.values.T
    arr = np.asarray(series, dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


def stationary_bootstrap_ci(series, n_boot: int = 2000, mean_block_length: float | None = None,
                            seed: int = 0, level: float = 0.95, reference=None):
    """Percentile bootstrap interval of a mean score or skill score.

    ``series`` is a :class:`ScoreSeries` or an array with time on the first
    axis (further axes, e.g. locations, are averaged). With ``reference`` the
    statistic is the skill score ``1 - mean(series) / mean(reference)``,
    both resampled with the same time indices.
    """
    x = _time_matrix(series)
    n = x.shape[0]
    if n < 10:
        raise InsufficientSeries(f"{n} time points, need at least 10")
    if n_boot < 100:
        raise ValueError("n_boot must be at least 100")
    block = mean_block_length or default_block_length(n)
    rng = np.random.default_rng(seed)
    idx = stationary_bootstrap_indices(n, n_boot, block, rng)
    # per-time sums/counts so each replicate is a cheap gather
    sums, counts = np.nansum(x, axis=1), np.sum(np.isfinite(x), axis=1)
    stat = sums[idx].sum(axis=1) / counts[idx].sum(axis=1)
    if reference is not None:
        r = _time_matrix(reference)
        if r.shape[0] != n:
            raise ValueError("series and reference differ in length")
        rsums, rcounts = np.nansum(r, axis=1), np.sum(np.isfinite(r), axis=1)
        ref_stat = rsums[idx].sum(axis=1) / rcounts[idx].sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            stat = 1.0 - stat / ref_stat
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(stat, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


# -- Diebold-Mariano and Benjamini-Hochberg --------------------------------------

@dataclass(frozen=True)
class DMResult:
    statistic: float
    p_value: float
    degenerate: bool = False


def diebold_mariano(d, horizon: int = 1) -> DMResult:
    """Two-sided DM test of zero mean loss differential.

    Long-run variance from autocovariances up to lag ``horizon - 1`` with a
    rectangular kernel. A non-positive variance estimate is flagged and
    reported with p = 1.
    """
    d = np.asarray(d, dtype=float)
    d = d[np.isfinite(d)]
    n = d.size
    if n < 30:
        raise InsufficientSeries(f"{n} loss differentials, need at least 30")
    dbar = d.mean()
    dc = d - dbar
    lrv = float(dc @ dc) / n
    for k in range(1, max(int(horizon), 1)):
        lrv += 2.0 * float(dc[k:] @ dc[:-k]) / n
    if not lrv > 0:
        return DMResult(0.0, 1.0, True)
    stat = dbar / math.sqrt(lrv / n)
    return DMResult(float(stat), float(2.0 * stats.norm.sf(abs(stat))))


def benjamini_hochberg(p_values, q: float = 0.05) -> np.ndarray:
    """Boolean rejection mask of the Benjamini-Hochberg step-up procedure."""
    p = np.asarray(p_values, dtype=float)
    m = p.size
    reject = np.zeros(m, dtype=bool)
    if m == 0:
        return reject
    order = np.argsort(p, kind="stable")
    passed = np.nonzero(p[order] <= q * np.arange(1, m + 1) / m)[0]
    if passed.size:
        reject[order[: passed[-1] + 1]] = True
    return reject
