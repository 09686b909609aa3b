"""Experiment flow: semi-local EMOS fits, quantile mapping and verification.

Everything here works on the dense :class:`~csgemos.ensemble.Dataset` cube.
Fits are organised in chains, one per (lead time, mixture), that walk
through the verification dates in order so each date can warm-start from the
previous one. Chains are independent, which is what the worker pool
parallelizes; results never depend on the number of workers.
"""

from __future__ import annotations

import datetime as dt
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .cluster import FeatureVector, effective_k, feature_values, kmeans, standardize
from .csg import crps_csg, empirical_crps, weighted_crps
from .emos import MIN_CASES_PER_PARAM, fit_arrays, link_arrays, n_free_parameters
from .ensemble import HIGH, LOW, EQUAL_COST_MIXTURES, Dataset, MixtureConfig, lead_days_to_hours
from .errors import ConfigError, EmptyWindow, InsufficientSeries
from .qmap import (
    ClosestMemberHistogram,
    build_clim_cdf,
    closest_member_ranks,
    combine_group_weights,
    fit_beta_weights,
    quantile_map,
)
from .special import gammainc_p
from .synth import ReforecastArchive
from .verify import (
    DEFAULT_THRESHOLDS,
    benjamini_hochberg,
    brier_from_prob,
    diebold_mariano,
    reliability,
    stationary_bootstrap_ci,
)

log = logging.getLogger(__name__)

METHODS = ("raw", "emos", "qm", "qmw")


@dataclass
class RunConfig:
    forecasts: str | None = None
    observations: str | None = None
    reforecasts: str | None = None
    data_dir: str = "data"
    output_dir: str = "out"
    mixtures: list = field(default_factory=lambda: [f"{h}-{l}" for h, l in EQUAL_COST_MIXTURES])
    cost_ratio: int = 4
    budget: float | None = 50
    window_days: int = 30
    allow_partial_windows: bool = False
    n_clusters: int = 12
    min_locations_per_cluster: int = 8
    n_feature_quantiles: int = 12
    warm_start: bool = True
    n_supplemental: int = 5
    julian_halfwidth: int = 4
    n_mean_bins: int = 3
    thresholds: list = field(default_factory=lambda: list(DEFAULT_THRESHOLDS))
    n_boot: int = 2000
    block_length: float | None = None
    confidence: float = 0.95
    fdr: float = 0.05
    reliability_bins: int = 10
    reliability_mixtures: list = field(default_factory=lambda: ["50-0", "40-40"])
    seed: int = 2016
    workers: int = 1
    scenario: dict = field(default_factory=dict)

    def __post_init__(self):
        checks = [
            (self.window_days > 0, "window_days must be positive"),
            (self.n_clusters >= 1, "n_clusters must be at least 1"),
            (self.min_locations_per_cluster >= 1, "min_locations_per_cluster must be at least 1"),
            (self.n_feature_quantiles >= 1, "n_feature_quantiles must be at least 1"),
            (self.n_supplemental >= 0, "n_supplemental must be non-negative"),
            (self.julian_halfwidth >= 0, "julian_halfwidth must be non-negative"),
            (self.n_mean_bins >= 1, "n_mean_bins must be at least 1"),
            (self.n_boot >= 100, "n_boot must be at least 100"),
            (0 < self.confidence < 1, "confidence must lie in (0, 1)"),
            (0 < self.fdr < 1, "fdr must lie in (0, 1)"),
            (self.reliability_bins >= 1, "reliability_bins must be at least 1"),
            (self.workers >= 1, "workers must be at least 1"),
            (all(t >= 0 for t in self.thresholds), "thresholds must be non-negative"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        for m in self.mixture_configs:
            if self.budget is not None and m.cost != self.budget:
                raise ConfigError(f"mixture {m} costs {float(m.cost):g}, not the budget {self.budget:g}")

    @property
    def mixture_configs(self) -> list[MixtureConfig]:
        try:
            return [MixtureConfig.parse(m, self.cost_ratio) for m in self.mixtures]
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"cannot parse mixtures {self.mixtures}: {exc}") from exc

    def to_dict(self) -> dict:
        return asdict(self)


def verification_dates(ds: Dataset, cfg: RunConfig) -> list[dt.date]:
    if cfg.allow_partial_windows:
        return list(ds.dates[1:])
    start = ds.dates[0] + dt.timedelta(days=cfg.window_days)
    dates = [d for d in ds.dates if d >= start]
    if not dates:
        raise EmptyWindow(f"{len(ds.dates)} days of data leave no verification date after a "
                          f"{cfg.window_days}-day training window")
    return dates


def mixture_means(ds: Dataset, mixture: MixtureConfig, lead_idx: int):
    """High, low and overall member means, each ``[location, day]``."""
    hi, lo = ds.members(mixture, lead_idx)
    fh = hi.mean(axis=-1) if mixture.m_high else np.zeros(hi.shape[:2])
    fl = lo.mean(axis=-1) if mixture.m_low else np.zeros(lo.shape[:2])
    fbar = (fh * mixture.m_high + fl * mixture.m_low) / (mixture.m_high + mixture.m_low)
    return fh, fl, fbar


def raw_members(ds: Dataset, mixture: MixtureConfig, lead_idx: int) -> np.ndarray:
    hi, lo = ds.members(mixture, lead_idx)
    return np.concatenate([hi, lo], axis=-1)


# -- semi-local EMOS -----------------------------------------------------------

@dataclass
class DateFit:
    target_date: dt.date
    assignment: dict  # location_id -> cluster
    reports: list  # FitReport per cluster


@dataclass
class ChainResult:
    lead_idx: int
    mixture: MixtureConfig
    dates: list
    fits: list  # DateFit per date

    def coefficient_rows(self, lead_h: int) -> list[dict]:
        rows = []
        for f in self.fits:
            for c, rep in enumerate(f.reports):
                co = rep.coefficients
                rows.append({
                    "cluster_id": c, "target_date": f.target_date.isoformat(), "lead_time_h": lead_h,
                    "a": co.a, "b_high": co.b_high, "b_low": co.b_low, "c": co.c, "d": co.d, "delta": co.delta,
                    "train_crps": rep.train_mean_crps, "init_crps": rep.init_mean_crps, "n_cases": rep.n_cases,
                    "converged": rep.converged, "iterations": rep.iterations, "evaluations": rep.evaluations,
                })
        return rows


def _cluster_locations(ds, obs_sl, fbar_sl, cfg: RunConfig):
    """k-means model plus standardized features in location order."""
    feats = [FeatureVector(loc, feature_values(obs_sl[i], fbar_sl[i], cfg.n_feature_quantiles))
             for i, loc in enumerate(ds.locations)]
    k = effective_k(cfg.n_clusters, len(feats), cfg.min_locations_per_cluster)
    model = kmeans(feats, k, seed=cfg.seed)
    raw = np.vstack([f.features for f in feats])
    return model, (raw - model.feature_mean) / model.feature_sd


def _training_pool(own, centroid, x, case_counts, need):
    """Location indices for a cluster, topped up with the nearest outside locations.

    Outside locations are taken in order of feature-space distance to the
    cluster centroid until the pool holds ``need`` cases.
    """
    locs = list(own)
    have = int(case_counts[locs].sum())
    if have >= need:
        return locs
    d2 = ((x - centroid) ** 2).sum(axis=1)
    inside = set(own)
    for j in np.argsort(d2, kind="stable"):
        if have >= need:
            break
        if j not in inside:
            locs.append(int(j))
            have += int(case_counts[j])
    return locs


def cluster_chain(ds: Dataset, mixture: MixtureConfig, lead_idx: int, dates: list, cfg: RunConfig) -> list:
    """``(target_date, location -> cluster)`` per date, as used by :func:`fit_chain`."""
    _, _, fbar = mixture_means(ds, mixture, lead_idx)
    out = []
    for target in dates:
        sl = ds.training_days(target, cfg.window_days, cfg.allow_partial_windows)
        model, _ = _cluster_locations(ds, ds.obs[:, sl], fbar[:, sl], cfg)
        out.append((target, dict(model.assignment)))
    return out


def fit_chain(ds: Dataset, mixture: MixtureConfig, lead_idx: int, dates: list, cfg: RunConfig) -> ChainResult:
    """Daily re-clustering and per-cluster CSG EMOS fits for one lead and mixture.

    A cluster whose locations provide fewer cases than the minimum-data
    guard borrows the cases of the nearest outside locations; its
    coefficients still apply only to its own locations. Warm starts take the
    previous date's coefficients of the cluster whose centroid lies closest
    in unstandardized feature space.
    """
    fh, fl, fbar = mixture_means(ds, mixture, lead_idx)
    need_cases = MIN_CASES_PER_PARAM * n_free_parameters(mixture)
    loc_index = {loc: i for i, loc in enumerate(ds.locations)}
    prev = None
    fits = []
    for target in dates:
        sl = ds.training_days(target, cfg.window_days, cfg.allow_partial_windows)
        model, x = _cluster_locations(ds, ds.obs[:, sl], fbar[:, sl], cfg)
        raw_centroids = model.centroids * model.feature_sd + model.feature_mean
        case_counts = np.isfinite(ds.obs[:, sl]).sum(axis=1)
        reports = []
        for c in range(model.k):
            own = [loc_index[loc] for loc in model.members(c)]
            locs = _training_pool(own, model.centroids[c], x, case_counts, need_cases)
            y = ds.obs[locs, sl].ravel()
            ok = np.isfinite(y)
            arrays = [a[locs, sl].ravel()[ok] for a in (fh, fl, fbar)]
            init = None
            if cfg.warm_start and prev is not None:
                prev_centroids, prev_reports = prev
                nearest = int(((prev_centroids - raw_centroids[c]) ** 2).sum(-1).argmin())
                init = prev_reports[nearest].coefficients
            reports.append(fit_arrays(*arrays, y[ok], mixture, init))
        fits.append(DateFit(target, dict(model.assignment), reports))
        prev = (raw_centroids, reports)
    return ChainResult(lead_idx, mixture, list(dates), fits)


def emos_params(ds: Dataset, chain_fits, mixture: MixtureConfig, lead_idx: int, dates: list):
    """CSG parameters ``(shape, scale, shift)``, each ``[location, date]``."""
    fh, fl, fbar = mixture_means(ds, mixture, lead_idx)
    n_loc = len(ds.locations)
    out = np.full((3, n_loc, len(dates)), np.nan)
    for j, f in enumerate(chain_fits):
        day = ds.day_index(f.target_date)
        for i, loc in enumerate(ds.locations):
            coeffs = f.reports[f.assignment[loc]].coefficients
            k, th, de = link_arrays(coeffs, fh[i, day], fl[i, day], fbar[i, day])
            out[:, i, j] = (k[0], th[0], de[0])
    return out


_WORKER_DS = None


def _init_worker(ds):
    global _WORKER_DS
    _WORKER_DS = ds


def _run_chain(args):
    mixture, lead_idx, dates, cfg = args
    return fit_chain(_WORKER_DS, mixture, lead_idx, dates, cfg)


def fit_all(ds: Dataset, cfg: RunConfig, dates: list | None = None) -> dict:
    """All EMOS chains keyed by ``(lead_idx, mixture label)``."""
    dates = dates or verification_dates(ds, cfg)
    jobs = [(m, li, dates, cfg) for li in range(len(ds.lead_days)) for m in cfg.mixture_configs]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers, initializer=_init_worker, initargs=(ds,)) as pool:
            results = list(pool.map(_run_chain, jobs))
    else:
        _init_worker(ds)
        results = [_run_chain(j) for j in jobs]
    return {(r.lead_idx, r.mixture.label): r for r in results}


# -- quantile mapping ------------------------------------------------------------

class QuantileMapper:
    """Desk-scale QM and QM+W trained on a reforecast archive.

    Climatologies for a location and day pool the control reforecasts (or
    analyses) of all archive years, the ``julian_halfwidth`` neighbouring
    calendar days on each side and the location's ``n_supplemental`` most
    similar locations. Closest-member histograms come from leave-one-year-out
    mapped reforecasts and are conditioned on terciles (``n_mean_bins``) of
    the mapped ensemble mean.
    """

    def __init__(self, archive: ReforecastArchive, cfg: RunConfig):
        self.archive = archive
        self.cfg = cfg
        self.n_days = len(archive.dates)
        self.neighbours = {li: self._neighbours(li) for li in range(len(archive.lead_days))}
        self.hists: dict = {}
        self.bin_edges: dict = {}
        self._weight_cache: dict = {}

    def _group_cube(self, group):
        return self.archive.high if group == HIGH else self.archive.low

    def _neighbours(self, lead_idx) -> np.ndarray:
        a = self.archive
        n_loc = len(a.locations)
        q = self.cfg.n_feature_quantiles
        feats = []
        for i in range(n_loc):
            obs = a.obs[:, i, :].ravel()
            ens_mean = a.high[:, i, :, lead_idx, :].mean(axis=-1).ravel()
            feats.append(feature_values(obs, ens_mean, q))
        x, _, _ = standardize(np.vstack(feats))
        d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
        n_sup = min(self.cfg.n_supplemental, n_loc - 1)
        # self first, then nearest others; stable order breaks distance ties by index
        order = np.argsort(d2 + np.diag(np.full(n_loc, -1.0)), axis=1, kind="stable")
        return order[:, : n_sup + 1]

    def _days(self, day_idx):
        h = self.cfg.julian_halfwidth
        return slice(max(day_idx - h, 0), min(day_idx + h + 1, self.n_days))

    def climatologies(self, lead_idx, group, loc_idx, day_idx, exclude_year=None):
        years = [y for y in range(len(self.archive.years)) if y != exclude_year]
        locs = self.neighbours[lead_idx][loc_idx]
        days = self._days(day_idx)
        cube = self._group_cube(group)
        f_sample = cube[np.ix_(years, locs)][:, :, days, lead_idx, 0]
        o_sample = self.archive.obs[np.ix_(years, locs)][:, :, days]
        return build_clim_cdf(f_sample), build_clim_cdf(o_sample)

    def map_members(self, members, lead_idx, group, loc_idx, day_idx, exclude_year=None, clims=None):
        f_clim, o_clim = clims or self.climatologies(lead_idx, group, loc_idx, day_idx, exclude_year)
        return quantile_map(members, f_clim, o_clim)

    def train_weights(self):
        """Closest-member histograms from leave-one-year-out mapped reforecasts."""
        a = self.archive
        n_rf = a.high.shape[-1]
        for li in range(len(a.lead_days)):
            for group in (HIGH, LOW):
                cube = self._group_cube(group)
                means, ranks = [], []
                for y in range(len(a.years)):
                    for i in range(len(a.locations)):
                        for d in range(self.n_days):
                            obs = a.obs[y, i, d]
                            if not np.isfinite(obs):
                                continue
                            mapped = np.sort(self.map_members(cube[y, i, d, li], li, group, i, d, exclude_year=y))
                            means.append(mapped.mean())
                            ranks.append(int(closest_member_ranks(mapped, obs)))
                means, ranks = np.asarray(means), np.asarray(ranks)
                levels = np.arange(1, self.cfg.n_mean_bins) / self.cfg.n_mean_bins
                edges = np.unique(np.quantile(means, levels)) if levels.size else np.array([])
                bins = np.digitize(means, edges, right=True)
                pooled = np.bincount(ranks, minlength=n_rf).astype(float)
                hists = []
                for b in range(edges.size + 1):
                    counts = np.bincount(ranks[bins == b], minlength=n_rf).astype(float)
                    hists.append(ClosestMemberHistogram(counts if counts.sum() > 0 else pooled, b))
                self.bin_edges[(li, group)] = edges
                self.hists[(li, group)] = hists
        return self

    def mean_bin(self, lead_idx, group, mapped_sorted) -> int:
        edges = self.bin_edges[(lead_idx, group)]
        return int(np.digitize(mapped_sorted.mean(), edges, right=True))

    def group_weights(self, lead_idx, group, mapped_sorted) -> np.ndarray:
        b = self.mean_bin(lead_idx, group, mapped_sorted)
        key = (lead_idx, group, b, mapped_sorted.size)
        if key not in self._weight_cache:
            self._weight_cache[key] = fit_beta_weights(self.hists[(lead_idx, group)][b], mapped_sorted.size)
        return self._weight_cache[key]

    def weight_set(self, lead_idx: int, mixture: MixtureConfig, bins: tuple) -> np.ndarray:
        """Combined QM+W weights of a mixture for the given per-group mean bins."""
        groups = [(g, n) for g, n in ((HIGH, mixture.m_high), (LOW, mixture.m_low)) if n]
        parts = []
        for (group, n), b in zip(groups, bins):
            key = (lead_idx, group, b, n)
            if key not in self._weight_cache:
                self._weight_cache[key] = fit_beta_weights(self.hists[(lead_idx, group)][b], n)
            parts.append(self._weight_cache[key])
        return combine_group_weights(parts)

    def forecast(self, ds: Dataset, mixture: MixtureConfig, lead_idx: int, loc_idx: int, day_idx: int,
                 clims: dict | None = None):
        """Mapped members (high then low, each sorted), QM+W weights and mean bins.

        The bins (one per present group) identify the weight set. ``clims``
        optionally supplies the per-group climatologies so callers looping
        over mixtures build them once.
        """
        hi, lo = ds.members(mixture, lead_idx)
        parts, weights, bins = [], [], []
        for group, members in ((HIGH, hi[loc_idx, day_idx]), (LOW, lo[loc_idx, day_idx])):
            if members.size == 0:
                continue
            pair = clims.get(group) if clims else None
            mapped = np.sort(self.map_members(members, lead_idx, group, loc_idx, day_idx, clims=pair))
            parts.append(mapped)
            if self.hists:
                weights.append(self.group_weights(lead_idx, group, mapped))
                bins.append(self.mean_bin(lead_idx, group, mapped))
        members = np.concatenate(parts)
        w = combine_group_weights(weights) if weights else None
        return members, w, tuple(bins)


# -- verification ---------------------------------------------------------------------

@dataclass
class MethodScores:
    """Per-case scores of one method, ``[location, date]`` arrays."""

    crps: np.ndarray
    prob_below: dict  # threshold -> F(threshold)
    brier: dict  # threshold -> BS


def _brier_tables(prob_below: dict, obs: np.ndarray) -> dict:
    return {t: brier_from_prob(p, t, obs) for t, p in prob_below.items()}


def score_raw(ds, mixture, lead_idx, day_idx, thresholds) -> MethodScores:
    members = raw_members(ds, mixture, lead_idx)[:, day_idx]
    obs = ds.obs[:, day_idx]
    crps = empirical_crps(members, obs)
    probs = {t: np.mean(members <= t, axis=-1) for t in thresholds}
    return MethodScores(crps, probs, _brier_tables(probs, obs))


def score_emos(params: np.ndarray, obs: np.ndarray, thresholds) -> MethodScores:
    k, th, de = params
    crps = crps_csg(k, th, de, np.where(np.isfinite(obs), obs, 0.0))
    probs = {t: gammainc_p(k, (t + de) / th) for t in thresholds}
    return MethodScores(np.where(np.isfinite(obs), crps, np.nan), probs, _brier_tables(probs, obs))


def score_qm(qm: QuantileMapper, ds, mixtures, lead_idx, day_idx, thresholds, cases: dict | None = None) -> dict:
    """QM and QM+W scores keyed by ``(mixture label, method)``.

    When ``cases`` is a dict it receives, per mixture label, ``[location,
    date]`` arrays of the mapped ensemble mean and the weight-set bins.
    """
    obs = ds.obs[:, day_idx]
    shape = obs.shape
    keys = [(m.label, method) for m in mixtures for method in ("qm", "qmw")]
    crps = {k: np.full(shape, np.nan) for k in keys}
    probs = {k: {t: np.full(shape, np.nan) for t in thresholds} for k in keys}
    if cases is not None:
        for m in mixtures:
            cases[m.label] = {"mean": np.full(shape, np.nan), "bins": np.empty(shape, dtype=object)}
    for i in range(shape[0]):
        for j, d in enumerate(day_idx):
            clims = {g: qm.climatologies(lead_idx, g, i, d) for g in (HIGH, LOW)}
            for m in mixtures:
                members, w, bins = qm.forecast(ds, m, lead_idx, i, d, clims)
                if cases is not None:
                    cases[m.label]["mean"][i, j] = members.mean()
                    cases[m.label]["bins"][i, j] = bins
                uniform = np.full(members.size, 1.0 / members.size)
                for method, weights in (("qm", uniform), ("qmw", w)):
                    key = (m.label, method)
                    if np.isfinite(obs[i, j]):
                        crps[key][i, j] = weighted_crps(members, weights, obs[i, j])
                    cum = np.cumsum(weights)
                    for t in thresholds:
                        pos = np.searchsorted(members, t, side="right")
                        probs[key][t][i, j] = min(cum[pos - 1], 1.0) if pos else 0.0
    return {k: MethodScores(crps[k], probs[k], _brier_tables(probs[k], obs)) for k in keys}


@dataclass
class Verification:
    dates: list
    locations: list
    lead_days: list
    scores: dict  # (lead_idx, mixture label, method) -> MethodScores
    obs: np.ndarray  # [location, date]


def score_all(ds: Dataset, cfg: RunConfig, chains: dict, qm: QuantileMapper | None, dates=None,
              qm_scores: dict | None = None) -> Verification:
    """Scores of every method; ``qm_scores`` (keyed like the result) skips re-running QM."""
    dates = dates or verification_dates(ds, cfg)
    day_idx = np.array([ds.day_index(d) for d in dates])
    scores = {}
    for li in range(len(ds.lead_days)):
        for m in cfg.mixture_configs:
            scores[(li, m.label, "raw")] = score_raw(ds, m, li, day_idx, cfg.thresholds)
            chain = chains[(li, m.label)]
            fits = chain.fits if isinstance(chain, ChainResult) else chain
            params = emos_params(ds, fits, m, li, dates)
            scores[(li, m.label, "emos")] = score_emos(params, ds.obs[:, day_idx], cfg.thresholds)
        if qm_scores is not None:
            scores.update({k: v for k, v in qm_scores.items() if k[0] == li})
        elif qm is not None:
            for (label, method), s in score_qm(qm, ds, cfg.mixture_configs, li, day_idx, cfg.thresholds).items():
                scores[(li, label, method)] = s
    return Verification(list(dates), list(ds.locations), list(ds.lead_days), scores, ds.obs[:, day_idx])


def _score_items(ms: MethodScores, thresholds):
    yield "crps", "", ms.crps
    for t in thresholds:
        yield "bs", t, ms.brier[t]


def summary_rows(ver: Verification, cfg: RunConfig) -> list[dict]:
    """Mean score and bootstrap interval per lead, mixture, method, score."""
    rows = []
    for (li, mix, method), ms in sorted(ver.scores.items(), key=lambda kv: (kv[0][0], _mix_order(cfg, kv[0][1]), METHODS.index(kv[0][2]))):
        for kind, thr, values in _score_items(ms, cfg.thresholds):
            lo, hi = stationary_bootstrap_ci(values.T, cfg.n_boot, cfg.block_length, cfg.seed, cfg.confidence)
            rows.append({"lead_time": lead_days_to_hours(ver.lead_days[li]), "mixture": mix, "method": method,
                         "score_kind": kind, "threshold": thr, "mean": float(np.nanmean(values)),
                         "ci_lo": lo, "ci_hi": hi})
    return rows


def _mix_order(cfg, label):
    labels = [m.label for m in cfg.mixture_configs]
    return labels.index(label)


def skill_rows(ver: Verification, cfg: RunConfig) -> list[dict]:
    """Skill against the raw pure high-resolution ensemble and against QM+W."""
    rows = []
    base_mix = cfg.mixture_configs[0].label
    for li in range(len(ver.lead_days)):
        for m in cfg.mixture_configs:
            pairs = [(method, ("raw", base_mix)) for method in METHODS]
            pairs.append(("emos", ("qmw", m.label)))
            for method, (ref_method, ref_mix) in pairs:
                key, ref_key = (li, m.label, method), (li, ref_mix, ref_method)
                if key not in ver.scores or ref_key not in ver.scores:
                    continue
                ms, ref = ver.scores[key], ver.scores[ref_key]
                for (kind, thr, values), (_, _, ref_values) in zip(_score_items(ms, cfg.thresholds), _score_items(ref, cfg.thresholds)):
                    mean_ref = float(np.nanmean(ref_values))
                    skill = 1.0 - float(np.nanmean(values)) / mean_ref if mean_ref > 0 else float("nan")
                    if key == ref_key:
                        lo = hi = 0.0
                        skill = 0.0
                    elif mean_ref > 0:
                        lo, hi = stationary_bootstrap_ci(values.T, cfg.n_boot, cfg.block_length, cfg.seed,
                                                         cfg.confidence, reference=ref_values.T)
                    else:
                        lo = hi = float("nan")
                    rows.append({"lead_time": lead_days_to_hours(ver.lead_days[li]), "mixture": m.label,
                                 "method": method, "reference_method": ref_method, "reference_mixture": ref_mix,
                                 "score_kind": kind, "threshold": thr, "skill": skill, "ci_lo": lo, "ci_hi": hi})
    return rows


def significance_summary(ver: Verification, cfg: RunConfig, method: str = "emos") -> list[dict]:
    """Per-station DM tests between mixtures with BH control across stations."""
    out = []
    mixes = [m.label for m in cfg.mixture_configs]
    for li, lead in enumerate(ver.lead_days):
        for ia in range(len(mixes)):
            for ib in range(ia + 1, len(mixes)):
                a, b = ver.scores[(li, mixes[ia], method)], ver.scores[(li, mixes[ib], method)]
                for (kind, thr, va), (_, _, vb) in zip(_score_items(a, cfg.thresholds), _score_items(b, cfg.thresholds)):
                    pvals = []
                    degenerate = untested = 0
                    for i in range(len(ver.locations)):
                        try:
                            res = diebold_mariano(va[i] - vb[i], horizon=int(lead))
                        except InsufficientSeries:
                            # too short to test; counts as not significant
                            pvals.append(1.0)
                            untested += 1
                            continue
                        pvals.append(res.p_value)
                        degenerate += res.degenerate
                    reject = benjamini_hochberg(pvals, cfg.fdr)
                    out.append({"lead_time": lead_days_to_hours(lead), "method": method, "score_kind": kind,
                                "threshold": thr, "mixture_a": mixes[ia], "mixture_b": mixes[ib],
                                "n_stations": len(pvals), "n_significant": int(reject.sum()),
                                "share_significant": float(reject.mean()), "n_degenerate": int(degenerate),
                                "n_untested": int(untested)})
    return out


def reliability_tables(ver: Verification, cfg: RunConfig) -> list[tuple[dict, object]]:
    """Reliability diagrams of threshold exceedance for the selected mixtures."""
    out = []
    outcome_base = ver.obs
    for li, lead in enumerate(ver.lead_days):
        for mix in cfg.reliability_mixtures:
            for method in METHODS:
                key = (li, mix, method)
                if key not in ver.scores:
                    continue
                for t in cfg.thresholds:
                    p_exceed = 1.0 - ver.scores[key].prob_below[t]
                    ok = np.isfinite(outcome_base) & np.isfinite(p_exceed)
                    diagram = reliability(np.clip(p_exceed[ok], 0.0, 1.0), outcome_base[ok] > t, cfg.reliability_bins)
                    out.append(({"lead_time": lead_days_to_hours(lead), "mixture": mix, "method": method,
                                 "threshold": t}, diagram))
    return out
