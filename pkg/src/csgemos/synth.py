"""Synthetic truth, dual-resolution ensembles and reforecasts.

Each location has a zero-inflated gamma climate. A standard normal latent
``z`` per location-day is turned into precipitation through the climate's
quantile function. For a lead time with skill ``rho`` the forecast system
sees a signal ``s = rho z + sqrt(1 - rho^2) eta``; a calibrated member is
``rho s + sqrt(1 - rho^2) e``, i.e. a draw from the law of ``z`` given ``s``.
Distortions act on top of that:

* each resolution sees ``s`` plus a shared noise term (larger for low
  resolution), which degrades its ensemble mean;
* member perturbations ``e`` are multiplied by the spread deflation factor;
* amounts are multiplied by the bias factor.

With no noise, deflation 1 and bias 1 the members and the truth are
exchangeable, i.e. the raw ensemble is calibrated.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .ensemble import EQUAL_COST_MIXTURES, Dataset, MixtureConfig, consecutive_dates

ROUND_DECIMALS = 3


@dataclass(frozen=True)
class ScenarioConfig:
    n_locations: int = 100
    n_days: int = 90
    start_date: dt.date = dt.date(2016, 6, 1)
    lead_days: tuple = (1, 5, 10)
    n_high: int = 50
    n_low: int = 200
    mixtures: tuple = EQUAL_COST_MIXTURES
    # climate hyper-ranges, drawn uniformly per location
    zero_prob: tuple = (0.3, 0.7)
    gamma_shape: tuple = (0.5, 1.2)
    gamma_scale: tuple = (2.0, 10.0)
    # predictability: rho(lead) = rho_day1 * exp(-skill_decay * (lead - 1))
    rho_day1: float = 0.95
    skill_decay: float = 0.08
    bias: float = 1.2
    deflation: float = 0.5
    high_noise: float = 0.2
    low_noise: float = 0.5
    n_reforecast_years: int = 3
    reforecast_members: int = 11
    seed: int = 2016

    def __post_init__(self):
        for name in ("n_locations", "n_days", "n_high", "n_low", "reforecast_members"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.lead_days or min(self.lead_days) <= 0:
            raise ValueError("lead times must be positive")
        if not 0 < self.deflation <= 1:
            raise ValueError("spread deflation must lie in (0, 1]")
        if self.bias <= 0 or self.high_noise < 0 or self.low_noise < 0:
            raise ValueError("bias must be positive and noise non-negative")
        if not 0 < self.rho_day1 < 1:
            raise ValueError("rho_day1 must lie in (0, 1)")
        for m in self.mixtures:
            m = m if isinstance(m, MixtureConfig) else MixtureConfig(*m)
            if m.m_high > self.n_high or m.m_low > self.n_low:
                raise ValueError(f"mixture {m} needs more members than generated")

    @property
    def mixture_configs(self) -> list[MixtureConfig]:
        return [m if isinstance(m, MixtureConfig) else MixtureConfig(*m) for m in self.mixtures]

    def rho(self, lead_days) -> np.ndarray:
        return self.rho_day1 * np.exp(-self.skill_decay * (np.asarray(lead_days, dtype=float) - 1.0))


@dataclass
class ReforecastArchive:
    """Reforecasts and analyses for earlier years on the same calendar days.

    Arrays: ``obs[year, location, day]`` and
    ``high``/``low[year, location, day, lead, member]``; member 0 is the
    control used for forecast climatologies.
    """

    years: list
    locations: list
    dates: list  # calendar days of the verification year
    lead_days: list
    obs: np.ndarray
    high: np.ndarray
    low: np.ndarray

    def year_dates(self, year: int) -> list[dt.date]:
        return [d.replace(year=year) for d in self.dates]


@dataclass
class Scenario:
    config: ScenarioConfig
    dataset: Dataset
    reforecast: ReforecastArchive
    # generator internals kept for oracle checks in tests
    climate: dict = field(repr=False, default_factory=dict)
    signal: np.ndarray | None = field(repr=False, default=None)


def _climate(cfg: ScenarioConfig, rng: np.random.Generator) -> dict:
    def draw(bounds):
        return rng.uniform(bounds[0], bounds[1], size=cfg.n_locations)

    return {"zero_prob": draw(cfg.zero_prob), "shape": draw(cfg.gamma_shape), "scale": draw(cfg.gamma_scale)}


def to_amount(z, zero_prob, shape, scale):
    """Zero-inflated gamma quantile of the normal latent ``z`` (broadcasting)."""
    u = special.ndtr(z)
    wet = np.clip((u - zero_prob) / (1.0 - zero_prob), 0.0, 1.0 - 1e-16)
    amount = special.gammaincinv(shape, wet) * scale
    return np.where(u <= zero_prob, 0.0, amount)


def _location_block(cfg: ScenarioConfig, rng, n_days, n_members_high, n_members_low, clim_i, rho, deflation, noise):
    """Truth and members for one location over ``n_days`` days."""
    n_lead = rho.size
    z = rng.standard_normal(n_days)
    eta = rng.standard_normal((n_days, n_lead))
    signal = rho * z[:, None] + np.sqrt(1.0 - rho**2) * eta
    members = []
    for n_mem, tau in ((n_members_high, noise[0]), (n_members_low, noise[1])):
        seen = signal + tau * rng.standard_normal((n_days, n_lead))
        e = rng.standard_normal((n_days, n_lead, n_mem))
        zm = (rho * seen)[..., None] + (np.sqrt(1.0 - rho**2) * deflation)[None, :, None] * e
        members.append(zm)
    zp, k, th = clim_i
    truth = to_amount(z, zp, k, th)
    hi = cfg.bias * to_amount(members[0], zp, k, th)
    lo = cfg.bias * to_amount(members[1], zp, k, th)
    return truth, hi, lo, signal


def generate(config: ScenarioConfig | None = None) -> Scenario:
    """Generate a synthetic experiment; identical output for identical config."""
    cfg = config or ScenarioConfig()
    root = np.random.SeedSequence(cfg.seed)
    clim_seq, fc_seq, rf_seq = root.spawn(3)
    clim = _climate(cfg, np.random.default_rng(clim_seq))
    rho = cfg.rho(cfg.lead_days)
    noise = (cfg.high_noise, cfg.low_noise)
    n_loc, n_lead = cfg.n_locations, len(cfg.lead_days)

    obs = np.empty((n_loc, cfg.n_days))
    high = np.empty((n_loc, cfg.n_days, n_lead, cfg.n_high))
    low = np.empty((n_loc, cfg.n_days, n_lead, cfg.n_low))
    signal = np.empty((n_loc, cfg.n_days, n_lead))
    for i, seq in enumerate(fc_seq.spawn(n_loc)):
        clim_i = (clim["zero_prob"][i], clim["shape"][i], clim["scale"][i])
        obs[i], high[i], low[i], signal[i] = _location_block(
            cfg, np.random.default_rng(seq), cfg.n_days, cfg.n_high, cfg.n_low, clim_i, rho, cfg.deflation, noise)

    n_years, n_rf = cfg.n_reforecast_years, cfg.reforecast_members
    rf_obs = np.empty((n_years, n_loc, cfg.n_days))
    rf_high = np.empty((n_years, n_loc, cfg.n_days, n_lead, n_rf))
    rf_low = np.empty_like(rf_high)
    for y, year_seq in enumerate(rf_seq.spawn(n_years)):
        for i, seq in enumerate(year_seq.spawn(n_loc)):
            clim_i = (clim["zero_prob"][i], clim["shape"][i], clim["scale"][i])
            rf_obs[y, i], rf_high[y, i], rf_low[y, i], _ = _location_block(
                cfg, np.random.default_rng(seq), cfg.n_days, n_rf, n_rf, clim_i, rho, cfg.deflation, noise)

    locations = [f"L{i:04d}" for i in range(n_loc)]
    dates = consecutive_dates(cfg.start_date, cfg.n_days)
    rnd = lambda a: np.round(a, ROUND_DECIMALS)  # noqa: E731
    ds = Dataset(locations, dates, list(cfg.lead_days), rnd(obs), rnd(high), rnd(low))
    years = [cfg.start_date.year - n_years + y for y in range(n_years)]
    rf = ReforecastArchive(years, locations, dates, list(cfg.lead_days), rnd(rf_obs), rnd(rf_high), rnd(rf_low))
    return Scenario(cfg, ds, rf, clim, signal)


def oracle_members(scenario: Scenario, n_members: int = 1000, seed: int = 0) -> np.ndarray:
    """Draws from the true predictive law of each case given the signal.

    Shape ``[location, day, lead, n_members]``; these members are what a
    perfectly calibrated, bias-free forecast system would produce.
    """
    cfg = scenario.config
    rho = cfg.rho(cfg.lead_days)
    rng = np.random.default_rng(seed)
    s = scenario.signal
    e = rng.standard_normal(s.shape + (n_members,))
    z = (rho * s)[..., None] + np.sqrt(1.0 - rho**2)[None, None, :, None] * e
    c = scenario.climate
    return to_amount(z, c["zero_prob"][:, None, None, None], c["shape"][:, None, None, None], c["scale"][:, None, None, None])
