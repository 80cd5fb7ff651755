"""Synthetic hourly observations and quantile forecasts for a small northern microgrid.

The series are a stand-in for measured data: seasonal and daily demand
cycles, PV following day length, and wind driven by a persistent random
process. Forecasts are the truth plus an error whose spread grows with lead
time, so the medium forecast is unbiased and the 0.2/0.8 quantiles are
calibrated for a Gaussian error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .scenario import VARIABLES, TimeSeriesSet

Z80 = 0.8416212335729143  # standard normal 0.8 quantile


@dataclass(frozen=True)
class SyntheticSite:
    wind_capacity: float = 135.0
    pv_capacity: float = 86.0
    demand_mean: float = 22.0
    demand_seasonal: float = 0.35  # relative winter excess
    demand_daily: float = 0.3
    latitude: float = 63.5
    wind_mean: float = 0.2  # capacity factor
    wind_persistence: float = 0.97


def _wind(rng: np.random.Generator, hours: int, site: SyntheticSite, season: np.ndarray) -> np.ndarray:
    shocks = rng.standard_normal(hours)
    latent = np.empty(hours)
    latent[0] = shocks[0]
    a = site.wind_persistence
    for t in range(1, hours):
        latent[t] = a * latent[t - 1] + np.sqrt(1 - a * a) * shocks[t]
    # windier winters; a logistic map of the latent state gives a bounded capacity factor
    level = np.log(site.wind_mean / (1 - site.wind_mean)) + 0.5 * season
    cf = 1.0 / (1.0 + np.exp(-(level + 1.6 * latent)))
    return site.wind_capacity * cf


def _pv(rng: np.random.Generator, stamps: pd.DatetimeIndex, site: SyntheticSite) -> np.ndarray:
    doy = stamps.dayofyear.to_numpy()
    hour = stamps.hour.to_numpy() + 0.5
    decl = np.deg2rad(23.44) * np.sin(2 * np.pi * (doy - 81) / 365.0)
    lat = np.deg2rad(site.latitude)
    hour_angle = np.deg2rad(15.0 * (hour - 12.0))
    elevation = np.sin(lat) * np.sin(decl) + np.cos(lat) * np.cos(decl) * np.cos(hour_angle)
    clear = np.clip(elevation, 0.0, None)
    days = len(stamps) // 24 + 1
    cloud = np.repeat(rng.beta(2.0, 1.4, days), 24)[: len(stamps)]
    return site.pv_capacity * 0.85 * clear * cloud


def _demand(rng: np.random.Generator, stamps: pd.DatetimeIndex, site: SyntheticSite, season: np.ndarray) -> np.ndarray:
    hour = stamps.hour.to_numpy()
    daily = 1.0 + site.demand_daily * (np.exp(-((hour - 8.0) ** 2) / 8.0) + np.exp(-((hour - 18.0) ** 2) / 6.0) - 0.45)
    noise = 1.0 + 0.08 * rng.standard_normal(len(stamps))
    return np.maximum(site.demand_mean * (1.0 + site.demand_seasonal * season) * daily * noise, 0.0)


def synthetic_year(year: int = 2020, seed: int = 0, site: SyntheticSite = SyntheticSite()) -> TimeSeriesSet:
    """Hourly wind, PV and demand for a calendar year (8784 hours in 2020)."""
    rng = np.random.default_rng(seed)
    stamps = pd.date_range(f"{year}-01-01", f"{year + 1}-01-01", freq="h", tz="UTC", inclusive="left")
    # +1 in mid-winter, -1 in mid-summer
    season = np.cos(2 * np.pi * (stamps.dayofyear.to_numpy() - 15) / 366.0)
    values = {
        "wind": _wind(rng, len(stamps), site, season),
        "pv": _pv(rng, stamps, site),
        "demand": _demand(rng, stamps, site, season),
    }
    return TimeSeriesSet(stamps, values)


def synthetic_forecasts(
    data: TimeSeriesSet,
    horizon: int = 48,
    issue_every: int = 6,
    seed: int = 0,
    site: SyntheticSite = SyntheticSite(),
    start: int = 0,
    stop: int | None = None,
) -> pd.DataFrame:
    """Long-format quantile forecasts issued every ``issue_every`` hours.

    The error standard deviation grows with the square root of lead time, up
    to a variable-specific fraction of the unit size.
    """
    rng = np.random.default_rng(seed)
    stop = len(data) if stop is None else stop
    scale = {"wind": 0.25 * site.wind_capacity, "pv": 0.2 * site.pv_capacity, "demand": 0.15 * site.demand_mean}
    upper = {"wind": site.wind_capacity, "pv": site.pv_capacity, "demand": np.inf}
    frames = []
    for issue in range(start, stop, issue_every):
        n = min(horizon, len(data) - issue)
        if n <= 0:
            break
        lead = np.arange(1, n + 1)
        for var in VARIABLES:
            truth = data[var][issue:issue + n]
            sigma = scale[var] * np.minimum(np.sqrt(lead / horizon), 1.0)
            if var == "pv":
                sigma = sigma * (truth > 0)
            # persistent error along the horizon, as in a real forecast run
            err = np.cumsum(rng.standard_normal(n)) / np.sqrt(lead)
            mid = np.clip(truth + sigma * err, 0.0, upper[var])
            low = np.clip(mid - Z80 * sigma, 0.0, upper[var])
            high = np.clip(mid + Z80 * sigma, 0.0, upper[var])
            frames.append(pd.DataFrame({
                "issue_time": data.timestamps[issue],
                "timestamp": data.timestamps[issue:issue + n],
                "variable": var,
                "q20": low, "q50": mid, "q80": high,
            }))
    return pd.concat(frames, ignore_index=True)


def write_timeseries(data: TimeSeriesSet, path) -> None:
    data.to_frame().to_csv(path, index=False, float_format="%.6f")


def write_forecasts(frame: pd.DataFrame, path) -> None:
    out = frame.copy()
    for col in ("issue_time", "timestamp"):
        out[col] = pd.DatetimeIndex(out[col]).strftime("%Y-%m-%dT%H:%M:%SZ")
    out.to_csv(path, index=False, float_format="%.6f")
