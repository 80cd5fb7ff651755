"""Observed series, quantile forecasts and the scenario sets built from them.

Every node of a policy graph gets five weighted realizations. In-horizon
nodes start from low/medium/high quantile forecasts of wind, PV and demand:
the 27 combinations are ordered by accumulated net production and one
representative is kept per probability band. Beyond the forecast horizon the
same pipeline runs on quantiles of historical daily means.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .system import StageRealization, SystemSpec, ValidationError

VARIABLES = ("wind", "pv", "demand")
QUANTILE_LEVELS = (0.2, 0.5, 0.8)
QUANTILE_WEIGHTS = (0.2, 0.6, 0.2)
BAND_EDGES = (0.0, 0.1, 0.3, 0.7, 0.9, 1.0)
BAND_PROBABILITIES = (0.1, 0.2, 0.4, 0.2, 0.1)

# generic observation file; other layouts are read through a column mapping
GENERIC_COLUMNS = {"timestamp": "timestamp", "wind": "wind_kw", "pv": "pv_kw", "demand": "demand_kw"}


@dataclass
class TimeSeriesSet:
    """Hourly aligned observations in kW, indexed by UTC timestamps."""

    timestamps: pd.DatetimeIndex
    values: Dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, variable: str) -> np.ndarray:
        return self.values[variable]

    def slice(self, start: int, stop: int) -> "TimeSeriesSet":
        return TimeSeriesSet(self.timestamps[start:stop], {k: v[start:stop] for k, v in self.values.items()})

    def window(self, start: int, hours: int) -> Dict[str, np.ndarray]:
        if start < 0 or start + hours > len(self):
            raise ValidationError([f"observations: window [{start}, {start + hours}) outside the {len(self)} available hours"])
        return {k: v[start:start + hours] for k, v in self.values.items()}

    def index_of(self, when) -> int:
        when = pd.Timestamp(when)
        when = when.tz_localize("UTC") if when.tzinfo is None else when.tz_convert("UTC")
        pos = self.timestamps.get_indexer([when])[0]
        if pos < 0:
            raise ValidationError([f"observations: no row at {when.isoformat()}"])
        return int(pos)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({f"{k}_kw": v for k, v in self.values.items()})
        frame.insert(0, "timestamp", self.timestamps.strftime("%Y-%m-%dT%H:%M:%SZ"))
        return frame


def _parse_utc(raw: pd.Series, label: str) -> pd.DatetimeIndex:
    parsed = pd.to_datetime(raw, utc=True, errors="coerce", format="ISO8601")
    bad = np.nonzero(parsed.isna().to_numpy())[0]
    if len(bad):
        raise ValidationError([f"{label} row {i + 2}: unparseable timestamp {raw.iloc[i]!r}" for i in bad[:20]])
    return pd.DatetimeIndex(parsed)


def load_timeseries(
    path: Union[str, Path],
    wind_scale: float = 1.0,
    columns: Optional[Mapping[str, str]] = None,
) -> TimeSeriesSet:
    """Read and validate an hourly observation CSV.

    ``columns`` maps ``timestamp``, ``wind``, ``pv`` and ``demand`` to the
    file's column names (default ``timestamp,wind_kw,pv_kw,demand_kw``). Row
    numbers in error messages count the header as row 1.
    """
    cols = dict(GENERIC_COLUMNS)
    cols.update(columns or {})
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [f"observations: missing column {cols[k]!r}" for k in cols if cols[k] not in frame.columns]
    if missing:
        raise ValidationError(missing)
    stamps = _parse_utc(frame[cols["timestamp"]], "observations")

    errors: List[str] = []
    values = {}
    for var in VARIABLES:
        raw = frame[cols[var]].str.strip()
        series = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
        for i in np.nonzero(~np.isfinite(series))[0][:20]:
            errors.append(f"observations row {i + 2}: {cols[var]} is not a number ({raw.iloc[i]!r})")
        for i in np.nonzero(series < 0)[0][:20]:
            errors.append(f"observations row {i + 2}: {cols[var]} is negative ({series[i]})")
        values[var] = series
    if len(stamps):
        off_hour = np.nonzero((stamps.minute != 0) | (stamps.second != 0))[0]
        for i in off_hour[:20]:
            errors.append(f"observations row {i + 2}: timestamp {stamps[i].isoformat()} is not on the hour")
        step = np.diff(stamps.asi8) / 3.6e12
        for i in np.nonzero(step <= 0)[0][:20]:
            errors.append(f"observations row {i + 3}: timestamp {stamps[i + 1].isoformat()} does not increase")
        for i in np.nonzero(step > 1)[0][:20]:
            gap = stamps[i] + pd.Timedelta(hours=1)
            errors.append(f"observations row {i + 3}: gap, missing hour {gap.isoformat()}")
    else:
        errors.append("observations: no rows")
    if errors:
        raise ValidationError(errors)
    if wind_scale < 0:
        raise ValidationError([f"observations: wind scale must be nonnegative ({wind_scale})"])
    values["wind"] = values["wind"] * wind_scale
    return TimeSeriesSet(stamps, values)


# --- forecasts ---------------------------------------------------------------------


@dataclass
class ForecastQuantiles:
    """Low/medium/high values per variable and forecast hour, shape ``(hours, 3)``."""

    values: Dict[str, np.ndarray]
    levels: Tuple[float, ...] = QUANTILE_LEVELS
    weights: Tuple[float, ...] = QUANTILE_WEIGHTS

    def __post_init__(self):
        self.values = {k: np.asarray(v, dtype=float).reshape(-1, 3) for k, v in self.values.items()}
        errors = []
        if abs(sum(self.weights) - 1.0) > 1e-12:
            errors.append(f"forecast weights sum to {sum(self.weights)}")
        lengths = {len(v) for v in self.values.values()}
        if len(lengths) > 1:
            errors.append(f"forecast variables cover different horizons {sorted(lengths)}")
        for k, v in self.values.items():
            if np.any(np.diff(v, axis=1) < 0):
                errors.append(f"forecast {k}: quantiles not ordered low <= medium <= high")
            if not np.all(np.isfinite(v)):
                errors.append(f"forecast {k}: non-finite value")
        if errors:
            raise ValidationError(errors)

    @property
    def hours(self) -> int:
        return len(next(iter(self.values.values())))

    def slice(self, start: int, stop: int) -> "ForecastQuantiles":
        return ForecastQuantiles({k: v[start:stop] for k, v in self.values.items()}, self.levels, self.weights)

    def median(self) -> Dict[str, np.ndarray]:
        return {k: v[:, 1].copy() for k, v in self.values.items()}


@dataclass
class ForecastArchive:
    """Quantile forecasts in long format, optionally tagged with their issue time.

    Without issue times the file is read as one continuous forecast and the
    window requested at any instant is simply cut out of it.
    """

    frame: pd.DataFrame  # columns issue_time (optional), timestamp, variable, q20, q50, q80

    def issues(self) -> pd.DatetimeIndex:
        if "issue_time" not in self.frame:
            return pd.DatetimeIndex([])
        return pd.DatetimeIndex(self.frame["issue_time"].unique()).sort_values()

    def at(self, when: pd.Timestamp, hours: int) -> ForecastQuantiles:
        """Forecast of the ``hours`` following ``when`` from the latest issue not after it."""
        frame = self.frame
        if "issue_time" in frame:
            issues = self.issues()
            issues = issues[issues <= when]
            if not len(issues):
                raise ValidationError([f"forecasts: no forecast issued at or before {when.isoformat()}"])
            frame = frame[frame["issue_time"] == issues[-1]]
        wanted = pd.date_range(when, periods=hours, freq="h")
        out = {}
        for var in VARIABLES:
            rows = frame[frame["variable"] == var].set_index("timestamp")
            rows = rows[~rows.index.duplicated(keep="last")]
            picked = rows.reindex(wanted)
            if picked["q50"].isna().any():
                first = wanted[np.nonzero(picked["q50"].isna().to_numpy())[0][0]]
                raise ValidationError([f"forecasts: {var} not available for {first.isoformat()} (needed at {when.isoformat()})"])
            out[var] = picked[["q20", "q50", "q80"]].to_numpy(dtype=float)
        return ForecastQuantiles(out)


def load_forecasts(path: Union[str, Path], wind_scale: float = 1.0) -> ForecastArchive:
    """Read a ``[issue_time,]timestamp,variable,q20,q50,q80`` CSV."""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    need = ["timestamp", "variable", "q20", "q50", "q80"]
    missing = [f"forecasts: missing column {c!r}" for c in need if c not in frame.columns]
    if missing:
        raise ValidationError(missing)
    errors = []
    out = pd.DataFrame({"timestamp": _parse_utc(frame["timestamp"], "forecasts")})
    if "issue_time" in frame.columns:
        out.insert(0, "issue_time", _parse_utc(frame["issue_time"], "forecasts"))
    out["variable"] = frame["variable"].str.strip().to_numpy()
    unknown = sorted(set(out["variable"]) - set(VARIABLES))
    if unknown:
        errors.append(f"forecasts: unknown variables {unknown}")
    for q in ("q20", "q50", "q80"):
        vals = pd.to_numeric(frame[q].str.strip(), errors="coerce").to_numpy(dtype=float)
        for i in np.nonzero(~np.isfinite(vals))[0][:20]:
            errors.append(f"forecasts row {i + 2}: {q} is not a number")
        out[q] = vals
    if errors:
        raise ValidationError(errors)
    wind = out["variable"] == "wind"
    out.loc[wind, ["q20", "q50", "q80"]] *= wind_scale
    return ForecastArchive(out)


# --- scenario construction ---------------------------------------------------------


@dataclass
class ScenarioSet:
    realizations: List[StageRealization]

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([r.probability for r in self.realizations])

    def __len__(self) -> int:
        return len(self.realizations)


def to_realization(
    spec: SystemSpec,
    variables: Mapping[str, np.ndarray],
    probability: float = 1.0,
    series: Optional[Mapping[str, str]] = None,
) -> StageRealization:
    """Map data variables onto the system's VRES units and loads.

    ``series`` maps a component name to a data variable; by default a
    component reads the variable of the same name. Availability is clipped to
    the unit capacity and all values to be nonnegative.
    """
    series = series or {}
    vres = {}
    for r in spec.vres:
        var = series.get(r.name, r.name)
        if var not in variables:
            raise ValidationError([f"{r.name}: no data variable {var!r}"])
        vres[r.name] = np.clip(variables[var], 0.0, r.capacity)
    demand = {}
    for d in spec.loads:
        var = series.get(d.name, d.name)
        if var not in variables:
            raise ValidationError([f"{d.name}: no data variable {var!r}"])
        demand[d.name] = np.maximum(np.asarray(variables[var], dtype=float), 0.0)
    return StageRealization(vres, demand, probability)


@dataclass
class Combination:
    """One low/medium/high pick per variable with its joint weight."""

    levels: Tuple[int, ...]
    probability: float
    values: Dict[str, np.ndarray]

    def net_production(self) -> float:
        return float(self.values["wind"].sum() + self.values["pv"].sum() - self.values["demand"].sum())


def combine_quantiles(q: ForecastQuantiles) -> List[Combination]:
    """All 27 joint picks of low/medium/high across wind, PV and demand."""
    out = []
    for levels in itertools.product(range(3), repeat=len(VARIABLES)):
        p = float(np.prod([q.weights[i] for i in levels]))
        values = {var: np.maximum(q.values[var][:, i], 0.0) for var, i in zip(VARIABLES, levels)}
        out.append(Combination(levels, p, values))
    return out


def reduce_by_net_production(
    combos: Sequence[Combination],
    edges: Sequence[float] = BAND_EDGES,
    band_probabilities: Sequence[float] = BAND_PROBABILITIES,
) -> List[Combination]:
    """Keep one representative per cumulative-probability band.

    Combinations are sorted by accumulated net production (stable, so equal
    values keep their input order). The representative of a band is the
    member covering the band's middle cumulative probability; when that
    point falls exactly on a boundary the lower member is taken.
    """
    total = sum(c.probability for c in combos)
    if abs(total - 1.0) > 1e-9:
        raise ValidationError([f"combinations: probabilities sum to {total!r}, not 1"])
    ordered = sorted(combos, key=lambda c: c.net_production())
    cum = np.cumsum([c.probability for c in ordered])
    out = []
    for lo, hi, p in zip(edges[:-1], edges[1:], band_probabilities):
        mid = 0.5 * (lo + hi)
        i = int(np.searchsorted(cum, mid - 1e-12, side="left"))
        i = min(i, len(ordered) - 1)
        picked = ordered[i]
        out.append(Combination(picked.levels, float(p), picked.values))
    return out


def scenario_set(spec: SystemSpec, q: ForecastQuantiles, series=None) -> ScenarioSet:
    reduced = reduce_by_net_production(combine_quantiles(q))
    return ScenarioSet([to_realization(spec, c.values, c.probability, series) for c in reduced])


def median_set(spec: SystemSpec, q: ForecastQuantiles, series=None) -> ScenarioSet:
    """Single-realization set holding the medium forecast."""
    return ScenarioSet([to_realization(spec, q.median(), 1.0, series)])


def daily_mean_quantiles(history: TimeSeriesSet, hours: int, min_days: int = 30) -> ForecastQuantiles:
    """Flat profiles at the 0.2/0.5/0.8 quantiles of historical daily means.

    Quantiles interpolate linearly between order statistics.
    """
    days = len(history) // 24
    if days < min_days:
        raise ValidationError([f"history: {days} whole days available, at least {min_days} needed"])
    out = {}
    for var in VARIABLES:
        means = history[var][: days * 24].reshape(days, 24).mean(axis=1)
        levels = np.quantile(means, QUANTILE_LEVELS, method="linear")
        out[var] = np.tile(levels, (hours, 1))
    return ForecastQuantiles(out)


def terminal_scenarios(spec: SystemSpec, history: TimeSeriesSet, hours: int = 72, series=None) -> ScenarioSet:
    return scenario_set(spec, daily_mean_quantiles(history, hours), series)


# --- stage layout ------------------------------------------------------------------


@dataclass(frozen=True)
class StageLayout:
    durations: Tuple[int, ...] = (6, 6, 6, 6, 24, 72)
    discount: float = 0.7
    roll_hours: int = 6

    def __post_init__(self):
        object.__setattr__(self, "durations", tuple(int(d) for d in self.durations))

    def validate(self) -> "StageLayout":
        errors = []
        if not self.durations:
            errors.append("layout.durations: at least one node is required")
        if any(d <= 0 for d in self.durations):
            errors.append(f"layout.durations: must be positive {self.durations}")
        if not 0.0 <= self.discount < 1.0:
            errors.append(f"layout.discount: must lie in [0, 1) ({self.discount})")
        if self.roll_hours <= 0 or (self.durations and self.roll_hours > self.durations[0]):
            errors.append(f"layout.roll_hours: must be positive and at most the first node ({self.roll_hours})")
        if errors:
            raise ValidationError(errors)
        return self

    @property
    def forecast_hours(self) -> int:
        """Hours covered by forecasts: every node except the cyclic one."""
        return sum(self.durations[:-1])

    def offsets(self) -> List[int]:
        return list(np.concatenate([[0], np.cumsum(self.durations[:-1])]).astype(int))
