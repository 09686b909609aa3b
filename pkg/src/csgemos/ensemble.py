"""Forecast cases, dual-resolution mixtures and rolling training windows."""

from __future__ import annotations

import datetime as dt
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyWindow, InvalidMixture

log = logging.getLogger(__name__)

HIGH = "high"
LOW = "low"

EQUAL_COST_MIXTURES = ((50, 0), (40, 40), (20, 120), (10, 160), (0, 200))


def _as_members(values) -> tuple:
    arr = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("ensemble members must be finite and non-negative")
    return tuple(arr.tolist())


@dataclass(frozen=True)
class MemberGroup:
    """Exchangeable ensemble members sharing one link coefficient."""

    label: str
    members: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "members", _as_members(self.members))

    def __len__(self):
        return len(self.members)

    @property
    def mean(self) -> float:
        return math.fsum(self.members) / len(self.members)


@dataclass(frozen=True)
class EnsembleForecast:
    location_id: str
    valid_time: dt.date
    lead_time: int
    groups: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if self.lead_time <= 0:
            raise ValueError(f"lead time must be positive, got {self.lead_time}")
        if self.n_members < 1:
            raise ValueError("forecast needs at least one member")

    @property
    def n_members(self) -> int:
        return sum(len(g) for g in self.groups)

    def group(self, label: str) -> MemberGroup | None:
        for g in self.groups:
            if g.label == label:
                return g
        return None

    def all_members(self) -> np.ndarray:
        return np.concatenate([np.asarray(g.members) for g in self.groups if len(g)])


@dataclass(frozen=True)
class ForecastCase:
    forecast: EnsembleForecast
    observation: float

    def __post_init__(self):
        if not (math.isfinite(self.observation) and self.observation >= 0):
            raise ValueError(f"observation must be finite and non-negative, got {self.observation}")

    @property
    def valid_time(self) -> dt.date:
        return self.forecast.valid_time

    @property
    def location_id(self) -> str:
        return self.forecast.location_id


@dataclass(frozen=True)
class MixtureConfig:
    """Number of high- and low-resolution members of a dual-resolution ensemble."""

    m_high: int
    m_low: int
    cost_ratio: int = 4

    def __post_init__(self):
        if self.m_high < 0 or self.m_low < 0 or self.m_high + self.m_low < 1:
            raise InvalidMixture(f"invalid mixture ({self.m_high}, {self.m_low})")
        if self.cost_ratio <= 0:
            raise InvalidMixture(f"cost ratio must be positive, got {self.cost_ratio}")

    @property
    def cost(self) -> Fraction:
        return self.m_high + Fraction(self.m_low, self.cost_ratio)

    @property
    def label(self) -> str:
        return f"{self.m_high}-{self.m_low}"

    @property
    def pure_high(self) -> bool:
        return self.m_low == 0

    @property
    def pure_low(self) -> bool:
        return self.m_high == 0

    @classmethod
    def parse(cls, text: str, cost_ratio: int = 4) -> "MixtureConfig":
        hi, lo = (int(v) for v in str(text).replace("(", "").replace(")", "").replace(",", "-").split("-"))
        return cls(hi, lo, cost_ratio)

    def __str__(self):
        return f"({self.m_high},{self.m_low})"


def validate_mixture(cfg: MixtureConfig, budget) -> bool:
    """True iff the mixture costs exactly ``budget`` high-resolution units."""
    return cfg.cost == Fraction(budget)


def group_means(f: EnsembleForecast) -> tuple[list[tuple[str, float]], float]:
    """Per-group means of the non-empty groups and the overall ensemble mean."""
    means = [(g.label, g.mean) for g in f.groups if len(g)]
    everything = [v for g in f.groups for v in g.members]
    return means, math.fsum(everything) / len(everything)


@dataclass(frozen=True)
class RollingWindow:
    target_date: dt.date
    length_days: int
    cases: tuple = field(default=())

    def __post_init__(self):
        first = self.target_date - dt.timedelta(days=self.length_days)
        for c in self.cases:
            if not (first <= c.valid_time < self.target_date):
                raise ValueError(f"case on {c.valid_time} outside window for {self.target_date}")


def window_bounds(target_date: dt.date, length_days: int) -> tuple[dt.date, dt.date]:
    """Inclusive first day and exclusive end of the training window."""
    return target_date - dt.timedelta(days=length_days), target_date


def assemble_windows(
    dataset: Iterable[ForecastCase],
    length_days: int,
    verification_dates: Sequence[dt.date],
    allow_partial_windows: bool = False,
    pool_locations: bool = True,
) -> list[RollingWindow]:
    """One training window per verification date.

    A window holds the cases valid on the ``length_days`` calendar days
    strictly before the target date. Without ``allow_partial_windows`` a
    window whose first day precedes the data, or that is empty, raises
    :class:`EmptyWindow`. With ``pool_locations`` false, every location gets
    its own window (returned in location order per date).
    """
    if length_days <= 0:
        raise ValueError("window length must be positive")
    by_date: dict[dt.date, list[ForecastCase]] = defaultdict(list)
    for c in dataset:
        by_date[c.valid_time].append(c)
    first_available = min(by_date) if by_date else None

    windows = []
    for target in verification_dates:
        start, end = window_bounds(target, length_days)
        if not allow_partial_windows and (first_available is None or start < first_available):
            raise EmptyWindow(f"insufficient history for a {length_days}-day window ending {target}")
        cases = []
        day = start
        while day < end:
            cases.extend(by_date.get(day, ()))
            day += dt.timedelta(days=1)
        if not cases:
            raise EmptyWindow(f"no training cases before {target}")
        if pool_locations:
            windows.append(RollingWindow(target, length_days, tuple(cases)))
        else:
            per_loc: dict[str, list[ForecastCase]] = defaultdict(list)
            for c in cases:
                per_loc[c.location_id].append(c)
            for loc in sorted(per_loc):
                windows.append(RollingWindow(target, length_days, tuple(per_loc[loc])))
    return windows


@dataclass
class Dataset:
    """Dense cube of forecasts and observations for one experiment.

    Member arrays are indexed ``[location, day, lead, member]`` and the
    observation array ``[location, day]``; dates are consecutive. Mixtures are formed by taking the leading
    ``m_high``/``m_low`` members of each resolution, so every mixture is a
    subset of the same two ensembles. Missing observations are NaN.
    """

    locations: list
    dates: list
    lead_days: list
    obs: np.ndarray
    high: np.ndarray
    low: np.ndarray

    def __post_init__(self):
        n_loc, n_day, n_lead = len(self.locations), len(self.dates), len(self.lead_days)
        if self.obs.shape != (n_loc, n_day):
            raise ValueError(f"observation cube has shape {self.obs.shape}")
        for arr in (self.high, self.low):
            if arr.shape[:3] != (n_loc, n_day, n_lead):
                raise ValueError(f"member cube has shape {arr.shape}")
        if any((b - a).days != 1 for a, b in zip(self.dates[:-1], self.dates[1:])):
            raise ValueError("dataset dates must be consecutive calendar days")
        self._day_index = {d: i for i, d in enumerate(self.dates)}

    @property
    def lead_hours(self) -> list[int]:
        return [lead_days_to_hours(d) for d in self.lead_days]

    def day_index(self, date: dt.date) -> int:
        return self._day_index[date]

    def members(self, mixture: MixtureConfig, lead_idx: int | None = None):
        """High and low member arrays of a mixture."""
        if mixture.m_high > self.high.shape[-1] or mixture.m_low > self.low.shape[-1]:
            raise InvalidMixture(f"mixture {mixture} exceeds available members")
        hi = self.high[..., : mixture.m_high]
        lo = self.low[..., : mixture.m_low]
        if lead_idx is not None:
            hi, lo = hi[:, :, lead_idx], lo[:, :, lead_idx]
        return hi, lo

    def cases(self, mixture: MixtureConfig, lead_idx: int) -> list[ForecastCase]:
        hi, lo = self.members(mixture, lead_idx)
        lead_h = self.lead_hours[lead_idx]
        out = []
        for i, loc in enumerate(self.locations):
            for j, day in enumerate(self.dates):
                y = self.obs[i, j]
                if not np.isfinite(y):
                    continue
                groups = (MemberGroup(HIGH, hi[i, j]), MemberGroup(LOW, lo[i, j]))
                out.append(ForecastCase(EnsembleForecast(loc, day, lead_h, groups), float(y)))
        return out

    def training_days(self, target: dt.date, length_days: int, allow_partial: bool = False) -> slice:
        """Day slice of the cube forming the rolling window for ``target``."""
        start, end = window_bounds(target, length_days)
        if start < self.dates[0] and not allow_partial:
            raise EmptyWindow(f"insufficient history for a {length_days}-day window ending {target}")
        lo = max((start - self.dates[0]).days, 0)
        hi = min((end - self.dates[0]).days, len(self.dates))
        if hi <= lo:
            raise EmptyWindow(f"no training cases before {target}")
        return slice(lo, hi)


def lead_days_to_hours(days: int) -> int:
    # 24h accumulations ending 0600 UTC from 0000 UTC runs: 30h, 54h, ...
    return 24 * int(days) + 6


def lead_hours_to_days(hours: int) -> int:
    return (int(hours) - 6) // 24


def consecutive_dates(start: dt.date, n: int) -> list[dt.date]:
    return [start + dt.timedelta(days=i) for i in range(n)]
