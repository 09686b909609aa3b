"""CSV ingestion and export.

Forecast files are long format, one row per member::

    location_id,valid_time,lead_time_h,obs_mm,group,member_idx,value_mm

with a companion observation file ``location_id,valid_time,obs_mm``. The
observation file wins over the ``obs_mm`` column when both are present.
"""

from __future__ import annotations

import datetime as dt
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from .ensemble import HIGH, LOW, Dataset, lead_days_to_hours, lead_hours_to_days
from .errors import DataError

log = logging.getLogger(__name__)

FORECAST_COLUMNS = ["location_id", "valid_time", "lead_time_h", "obs_mm", "group", "member_idx", "value_mm"]
OBSERVATION_COLUMNS = ["location_id", "valid_time", "obs_mm"]
REFORECAST_COLUMNS = ["location_id", "valid_time", "lead_time_h", "group", "member_idx", "value_mm"]
VALUE_FORMAT = "%.3f"


def _read(path, columns) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype={"location_id": str})
    except (OSError, pd.errors.ParserError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    try:
        df["valid_time"] = pd.to_datetime(df["valid_time"], format="%Y-%m-%d").dt.date
    except ValueError as exc:
        raise DataError(f"{path}: valid_time must be ISO dates: {exc}") from exc
    return df


def _check_values(df: pd.DataFrame, column: str, path):
    vals = df[column].to_numpy(dtype=float)
    bad = ~np.isfinite(vals) | (vals < 0)
    if bad.any():
        raise DataError(f"{path}: {int(bad.sum())} invalid {column} values (must be finite and >= 0)")


def _cube(df: pd.DataFrame, locations, dates, leads_h, group: str, n_members: int, path) -> np.ndarray:
    sub = df[df["group"] == group]
    cube = np.full((len(locations), len(dates), len(leads_h), n_members), np.nan)
    if n_members == 0:
        return cube
    li = sub["location_id"].map({v: i for i, v in enumerate(locations)}).to_numpy()
    di = sub["valid_time"].map({v: i for i, v in enumerate(dates)}).to_numpy()
    ti = sub["lead_time_h"].map({v: i for i, v in enumerate(leads_h)}).to_numpy()
    mi = sub["member_idx"].to_numpy(dtype=int)
    cube[li, di, ti, mi] = sub["value_mm"].to_numpy(dtype=float)
    if np.isnan(cube).any():
        raise DataError(f"{path}: incomplete {group} member grid ({int(np.isnan(cube).sum())} values missing)")
    return cube


def read_observations(path) -> dict:
    """Map ``(location_id, date) -> obs_mm``; rows with missing values are dropped."""
    df = _read(path, OBSERVATION_COLUMNS)
    missing = df["obs_mm"].isna()
    if missing.any():
        log.info("dropping %d observation rows with missing values", int(missing.sum()))
        df = df[~missing]
    _check_values(df, "obs_mm", path)
    return {(r.location_id, r.valid_time): float(r.obs_mm) for r in df.itertuples(index=False)}


def read_dataset(forecast_path, observation_path=None) -> Dataset:
    df = _read(forecast_path, FORECAST_COLUMNS)
    _check_values(df, "value_mm", forecast_path)
    locations = sorted(df["location_id"].unique())
    first, last = min(df["valid_time"]), max(df["valid_time"])
    dates = [first + dt.timedelta(days=i) for i in range((last - first).days + 1)]
    leads_h = sorted(int(v) for v in df["lead_time_h"].unique())
    counts = df.groupby("group")["member_idx"].max()
    n_high = int(counts.get(HIGH, -1)) + 1
    n_low = int(counts.get(LOW, -1)) + 1
    unknown = set(df["group"].unique()) - {HIGH, LOW}
    if unknown:
        raise DataError(f"{forecast_path}: unknown member groups {sorted(unknown)}")
    high = _cube(df, locations, dates, leads_h, HIGH, n_high, forecast_path)
    low = _cube(df, locations, dates, leads_h, LOW, n_low, forecast_path)

    obs = np.full((len(locations), len(dates)), np.nan)
    li = {v: i for i, v in enumerate(locations)}
    di = {v: i for i, v in enumerate(dates)}
    if observation_path is not None:
        for (loc, day), v in read_observations(observation_path).items():
            if loc in li and day in di:
                obs[li[loc], di[day]] = v
    else:
        rows = df.dropna(subset=["obs_mm"]).drop_duplicates(["location_id", "valid_time"])
        for r in rows.itertuples(index=False):
            obs[li[r.location_id], di[r.valid_time]] = float(r.obs_mm)
    n_missing = int(np.isnan(obs).sum())
    if n_missing:
        log.info("%d location-days without observations are excluded", n_missing)
    return Dataset(locations, dates, [lead_hours_to_days(h) for h in leads_h], obs, high, low)


def _long_frame(locations, dates, leads_h, cube: np.ndarray, group: str) -> pd.DataFrame:
    n_loc, n_day, n_lead, n_mem = cube.shape
    li, di, ti, mi = np.meshgrid(np.arange(n_loc), np.arange(n_day), np.arange(n_lead), np.arange(n_mem), indexing="ij")
    return pd.DataFrame(
        {
            "location_id": np.asarray(locations, dtype=object)[li.ravel()],
            "valid_time": np.asarray([d.isoformat() for d in dates], dtype=object)[di.ravel()],
            "lead_time_h": np.asarray(leads_h)[ti.ravel()],
            "group": group,
            "member_idx": mi.ravel(),
            "value_mm": cube.ravel(),
        }
    )


def write_dataset(ds: Dataset, forecast_path, observation_path=None, extra_observations=None):
    """Write a dataset in the long forecast format plus the observation file.

    ``extra_observations`` (a list of ``(location_id, date, value)``) is
    appended to the observation file, e.g. analyses for reforecast years.
    """
    leads_h = ds.lead_hours
    frames = [_long_frame(ds.locations, ds.dates, leads_h, ds.high, HIGH), _long_frame(ds.locations, ds.dates, leads_h, ds.low, LOW)]
    df = pd.concat(frames, ignore_index=True)
    obs_lookup = pd.Series(
        ds.obs.ravel(),
        index=pd.MultiIndex.from_product([ds.locations, [d.isoformat() for d in ds.dates]]),
    )
    df["obs_mm"] = obs_lookup.reindex(pd.MultiIndex.from_arrays([df["location_id"], df["valid_time"]])).to_numpy()
    df = df.sort_values(["location_id", "valid_time", "lead_time_h", "group", "member_idx"], kind="stable")
    df[FORECAST_COLUMNS].to_csv(forecast_path, index=False, float_format=VALUE_FORMAT)
    if observation_path is not None:
        rows = [(loc, d.isoformat(), ds.obs[i, j]) for i, loc in enumerate(ds.locations) for j, d in enumerate(ds.dates)]
        rows += [(loc, d.isoformat(), v) for loc, d, v in (extra_observations or [])]
        obs = pd.DataFrame(rows, columns=OBSERVATION_COLUMNS).sort_values(["location_id", "valid_time"], kind="stable")
        obs.to_csv(observation_path, index=False, float_format=VALUE_FORMAT)


def write_frame(df: pd.DataFrame, path, float_format="%.6f"):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=float_format, lineterminator="\n")


def write_reforecasts(archive, path):
    """Long-format reforecast file, one row per member and year."""
    frames = []
    leads_h = [lead_days_to_hours(d) for d in archive.lead_days]
    for y, year in enumerate(archive.years):
        dates = archive.year_dates(year)
        frames.append(_long_frame(archive.locations, dates, leads_h, archive.high[y], HIGH))
        frames.append(_long_frame(archive.locations, dates, leads_h, archive.low[y], LOW))
    df = pd.concat(frames, ignore_index=True)
    df = df.sort_values(["location_id", "valid_time", "lead_time_h", "group", "member_idx"], kind="stable")
    df[REFORECAST_COLUMNS].to_csv(path, index=False, float_format=VALUE_FORMAT)


def archive_observations(archive) -> list:
    return [
        (loc, d, float(archive.obs[y, i, j]))
        for y, year in enumerate(archive.years)
        for i, loc in enumerate(archive.locations)
        for j, d in enumerate(archive.year_dates(year))
    ]


def read_reforecasts(path, observations: dict, template: Dataset):
    """Reforecast archive aligned to the calendar days of ``template``.

    ``observations`` maps ``(location_id, date)`` to the verifying analysis.
    """
    from .synth import ReforecastArchive

    df = _read(path, REFORECAST_COLUMNS)
    _check_values(df, "value_mm", path)
    years = sorted({d.year for d in df["valid_time"]})
    leads_h = [lead_days_to_hours(d) for d in template.lead_days]
    locations = template.locations
    n_rf = int(df["member_idx"].max()) + 1
    high, low, obs = [], [], []
    for year in years:
        try:
            dates = [d.replace(year=year) for d in template.dates]
        except ValueError as exc:
            raise DataError(f"reforecast year {year} lacks a calendar day of the forecast period") from exc
        sub = df[df["valid_time"].map(lambda d: d.year == year)]
        high.append(_cube(sub, locations, dates, leads_h, HIGH, n_rf, path))
        low.append(_cube(sub, locations, dates, leads_h, LOW, n_rf, path))
        obs.append([[observations.get((loc, d), np.nan) for d in dates] for loc in locations])
    obs = np.asarray(obs, dtype=float)
    if np.isnan(obs).any():
        log.info("%d reforecast location-days lack analyses", int(np.isnan(obs).sum()))
    return ReforecastArchive(years, locations, list(template.dates), list(template.lead_days), obs,
                             np.asarray(high), np.asarray(low))
