"""CSG EMOS for dual-resolution ensembles.

Link functions::

    mu      = a^2 + b_high^2 * mean(high) + b_low^2 * mean(low)
    sigma^2 = c^2 + d^2 * mean(all members)

map an ensemble to the mean and variance of the underlying gamma law; the
shift ``delta`` does not depend on the forecast. Coefficients are estimated
by minimizing the mean CRPS over a training window.
"""

from __future__ import annotations

import logging
import math
from dataclasses import astuple, dataclass, replace
from typing import Sequence

import numba
import numpy as np

from .csg import PARAM_FLOOR, CsgParams, crps_csg_scalar, moments_to_params
from .ensemble import HIGH, LOW, EnsembleForecast, ForecastCase, MixtureConfig, group_means
from .errors import ArityError, InsufficientData
from .optimize import nelder_mead

log = logging.getLogger(__name__)

MIN_CASES_PER_PARAM = 20
# the shift is capped at the largest training observation (at least this, mm)
DELTA_CAP_FLOOR = 1.0
FIELDS = ("a", "b_high", "b_low", "c", "d", "delta")


@dataclass(frozen=True)
class EmosCoefficients:
    a: float = 0.3
    b_high: float = 0.7
    b_low: float = 0.7
    c: float = 0.5
    d: float = 0.5
    delta: float = 0.5

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"shift must be positive, got {self.delta}")

    @classmethod
    def default(cls, mixture: MixtureConfig) -> "EmosCoefficients":
        """Default start: active mean coefficients split unit weight."""
        if mixture.pure_high:
            return cls(b_high=1.0, b_low=0.0)
        if mixture.pure_low:
            return cls(b_high=0.0, b_low=1.0)
        return cls(b_high=math.sqrt(0.5), b_low=math.sqrt(0.5))

    def frozen_for(self, mixture: MixtureConfig) -> "EmosCoefficients":
        if mixture.pure_high:
            return replace(self, b_low=0.0)
        if mixture.pure_low:
            return replace(self, b_high=0.0)
        return self


@dataclass(frozen=True)
class FitReport:
    coefficients: EmosCoefficients
    train_mean_crps: float
    n_cases: int
    iterations: int
    converged: bool
    evaluations: int = 0
    init_mean_crps: float = float("nan")


# -- link functions ---------------------------------------------------------

@numba.njit(cache=True)
def _params(a, bh, bl, c, d, delta, fh, fl, fbar):
    mu = a * a + bh * bh * fh + bl * bl * fl
    var = c * c + d * d * fbar
    floored = 0
    if mu < PARAM_FLOOR:
        mu = PARAM_FLOOR
        floored += 1
    if var < PARAM_FLOOR * PARAM_FLOOR:
        var = PARAM_FLOOR * PARAM_FLOOR
        floored += 1
    shape = mu * mu / var
    scale = var / mu
    if shape < PARAM_FLOOR:
        shape = PARAM_FLOOR
        floored += 1
    if scale < PARAM_FLOOR:
        scale = PARAM_FLOOR
        floored += 1
    if delta < PARAM_FLOOR:
        delta = PARAM_FLOOR
        floored += 1
    return shape, scale, delta, floored


@numba.njit(cache=True)
def _link_arrays(a, bh, bl, c, d, delta, fh, fl, fbar):
    n = fh.size
    shape = np.empty(n)
    scale = np.empty(n)
    shift = np.empty(n)
    floored = 0
    for i in range(n):
        shape[i], scale[i], shift[i], f = _params(a, bh, bl, c, d, delta, fh[i], fl[i], fbar[i])
        floored += f
    return shape, scale, shift, floored


@numba.njit(cache=True)
def _mean_crps(a, bh, bl, c, d, delta, fh, fl, fbar, y):
    total = 0.0
    floored = 0
    for i in range(y.size):
        k, th, de, f = _params(a, bh, bl, c, d, delta, fh[i], fl[i], fbar[i])
        floored += f
        total += crps_csg_scalar(k, th, de, y[i])
    return total / y.size, floored


def link(coeffs: EmosCoefficients, f_high_mean: float, f_low_mean: float, f_overall_mean: float) -> CsgParams:
    k, th, de, floored = _params(*astuple(coeffs), float(f_high_mean), float(f_low_mean), float(f_overall_mean))
    if floored:
        log.debug("link floored %d parameter(s) at %g", floored, PARAM_FLOOR)
    return CsgParams(k, th, de)


def link_arrays(coeffs: EmosCoefficients, f_high_mean, f_low_mean, f_overall_mean):
    """Vectorized :func:`link`; returns ``(shape, scale, shift)`` arrays."""
    fh, fl, fbar = (np.ascontiguousarray(v, dtype=float).ravel() for v in (f_high_mean, f_low_mean, f_overall_mean))
    shape, scale, shift, floored = _link_arrays(*astuple(coeffs), fh, fl, fbar)
    if floored:
        log.debug("link floored %d parameter(s) at %g", floored, PARAM_FLOOR)
    return shape, scale, shift


def general_link(a: float, b: Sequence[float], c: float, d: float, delta: float,
                 means: Sequence[float], overall_mean: float) -> CsgParams:
    """Link for K groups of exchangeable members, one ``b_k`` per group."""
    if len(b) != len(means):
        raise ArityError(f"{len(b)} mean coefficients for {len(means)} groups")
    mu = a * a + math.fsum(bk * bk * fk for bk, fk in zip(b, means))
    var = c * c + d * d * overall_mean
    mu = max(mu, PARAM_FLOOR)
    sigma = max(math.sqrt(max(var, 0.0)), PARAM_FLOOR)
    g = moments_to_params(mu, sigma)
    return CsgParams(max(g.shape, PARAM_FLOOR), max(g.scale, PARAM_FLOOR), max(delta, PARAM_FLOOR))


def member_link(a: float, b: Sequence[float], c: float, d: float, delta: float, members: Sequence[float]) -> CsgParams:
    """Per-member link: every member is its own group."""
    members = list(members)
    return general_link(a, b, c, d, delta, members, math.fsum(members) / len(members))


def predict(coeffs: EmosCoefficients, f: EnsembleForecast) -> CsgParams:
    means, overall = group_means(f)
    by_label = dict(means)
    unknown = set(by_label) - {HIGH, LOW}
    if unknown:
        raise ArityError(f"no coefficients for member groups {sorted(unknown)}")
    return link(coeffs, by_label.get(HIGH, 0.0), by_label.get(LOW, 0.0), overall)


# -- estimation ---------------------------------------------------------------

def case_arrays(cases: Sequence[ForecastCase]):
    """Group means, overall means and observations of a list of cases."""
    n = len(cases)
    fh, fl, fbar, y = np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n)
    for i, case in enumerate(cases):
        means, overall = group_means(case.forecast)
        by_label = dict(means)
        fh[i] = by_label.get(HIGH, 0.0)
        fl[i] = by_label.get(LOW, 0.0)
        fbar[i] = overall
        y[i] = case.observation
    return fh, fl, fbar, y


def mean_crps_objective(coeffs: EmosCoefficients, window: Sequence[ForecastCase]) -> float:
    if len(window) == 0:
        raise InsufficientData("empty training window")
    return mean_crps_arrays(coeffs, *case_arrays(window))


def mean_crps_arrays(coeffs: EmosCoefficients, fh, fl, fbar, y) -> float:
    arrays = [np.ascontiguousarray(v, dtype=float).ravel() for v in (fh, fl, fbar, y)]
    value, _ = _mean_crps(*astuple(coeffs), *arrays)
    return value


@numba.njit(cache=True)
def _weighted_mean_crps(a, bh, bl, c, d, delta, fh, fl, fbar, y, w):
    total = 0.0
    for i in range(y.size):
        k, th, de, _ = _params(a, bh, bl, c, d, delta, fh[i], fl[i], fbar[i])
        total += w[i] * crps_csg_scalar(k, th, de, y[i])
    return total


@numba.njit(cache=True)
def _simplex_objective(x, args):
    # x holds the free coefficients; full[5] is log(delta) and full[6] its cap
    full, free, fh, fl, fbar, y, w = args
    v = full.copy()
    v[free] = x
    return _weighted_mean_crps(v[0], v[1], v[2], v[3], v[4], math.exp(min(v[5], v[6])), fh, fl, fbar, y, w)


def _unique_cases(fh, fl, fbar, y):
    """Collapse repeated cases into weights summing to one.

    Dry forecasts verified by dry observations repeat exactly, so this
    typically removes a third of the kernel calls without changing the mean.
    """
    rows, counts = np.unique(np.stack([fh, fl, fbar, y], axis=1), axis=0, return_counts=True)
    cols = (np.ascontiguousarray(rows[:, j]) for j in range(4))
    return (*cols, counts / y.size)


def _free_mask(mixture: MixtureConfig) -> np.ndarray:
    mask = np.ones(6, dtype=bool)
    if mixture.pure_high:
        mask[2] = False
    if mixture.pure_low:
        mask[1] = False
    return mask


def n_free_parameters(mixture: MixtureConfig) -> int:
    return int(_free_mask(mixture).sum())


def fit_arrays(fh, fl, fbar, y, mixture: MixtureConfig, init: EmosCoefficients | None = None,
               max_iter: int = 2000, ftol: float = 1e-9) -> FitReport:
    """Minimum-CRPS estimate from precomputed group means.

    The simplex works on ``(a, b_high, b_low, c, d, log delta)`` with the
    inactive mean coefficient of a pure mixture removed and held at zero.

    The shift is capped at the largest training observation (at least
    ``DELTA_CAP_FLOOR``). Without the cap some small or weakly informative
    windows prefer the censored-normal limit, where ``a**2`` and ``delta``
    grow together without bound and the objective keeps creeping down.
    """
    fh, fl, fbar, y = (np.ascontiguousarray(v, dtype=float).ravel() for v in (fh, fl, fbar, y))
    mask = _free_mask(mixture)
    n_cases = y.size
    if n_cases < MIN_CASES_PER_PARAM * mask.sum():
        raise InsufficientData(f"{n_cases} training cases for {mask.sum()} parameters "
                               f"(need {MIN_CASES_PER_PARAM * mask.sum()})")
    init = (init or EmosCoefficients.default(mixture)).frozen_for(mixture)
    log_cap = math.log(max(DELTA_CAP_FLOOR, float(y.max())))
    full = np.array(astuple(init) + (log_cap,), dtype=float)
    full[5] = min(math.log(full[5]), log_cap)

    args = (full, np.flatnonzero(mask), *_unique_cases(fh, fl, fbar, y))
    step = np.array([0.1, 0.1, 0.1, 0.1, 0.1, 0.25])[mask]
    res = nelder_mead(_simplex_objective, full[:6][mask], step=step, ftol=ftol, max_iter=max_iter, args=args)
    best = full[:6].copy()
    best[mask] = res.x
    coeffs = EmosCoefficients(*best[:5], math.exp(min(best[5], log_cap))).frozen_for(mixture)
    _, floored = _mean_crps(*astuple(coeffs), fh, fl, fbar, y)
    if floored:
        log.debug("fitted coefficients floor %d parameter(s) on the training window", floored)
    return FitReport(coeffs, res.fun, n_cases, res.iterations, res.converged, res.evaluations,
                     _simplex_objective(full[:6][mask], args))


def fit(window: Sequence[ForecastCase], config: MixtureConfig, init: EmosCoefficients | None = None, **kwargs) -> FitReport:
    return fit_arrays(*case_arrays(window), config, init, **kwargs)
