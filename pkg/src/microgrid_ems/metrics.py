"""Cost and energy accounting of a simulated trajectory, and report files.

Degradation is always re-priced with the full tables, whichever cost terms
the optimizer saw, so methods that ignore ageing are still charged for it.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from .degradation import HOURS_PER_YEAR, DegradationTables, SocFade
from .subproblem import StageSolution
from .system import SystemSpec, ValidationError


@dataclass
class MetricsReport:
    case: str = ""
    method: str = ""
    total_cost: float = 0.0
    load_shedding_cost: float = 0.0
    diesel_cost: float = 0.0
    dod_cost: float = 0.0
    soc_up_cost: float = 0.0
    soc_down_cost: float = 0.0
    lifetime_years: float = float("nan")
    vres_mwh: float = 0.0
    h2_charge_mwh: float = 0.0
    h2_discharge_mwh: float = 0.0
    battery_charge_mwh: float = 0.0
    battery_discharge_mwh: float = 0.0
    hours: float = 0.0

    @property
    def degradation_cost(self) -> float:
        return self.dod_cost + self.soc_up_cost + self.soc_down_cost

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: Mapping[str, object]) -> "MetricsReport":
        known = {f.name: f.type for f in fields(cls)}
        unknown = sorted(set(raw) - set(known))
        if unknown:
            raise ValidationError([f"report: unknown fields {unknown}"])
        out = cls()
        for name, value in raw.items():
            setattr(out, name, str(value) if name in ("case", "method") else float(value))
        return out


REPORT_COLUMNS = [f.name for f in fields(MetricsReport)]


@dataclass(frozen=True)
class LifetimeEstimate:
    annual_fade: float
    years: float


def _concat(solutions: Sequence[StageSolution], attr: str, name: str) -> np.ndarray:
    return np.concatenate([getattr(s, attr)[name] for s in solutions])


def accumulate_metrics(
    solutions: Sequence[StageSolution],
    spec: SystemSpec,
    tables: Mapping[str, DegradationTables],
    case: str = "",
    method: str = "",
) -> MetricsReport:
    """Price a chronologically ordered sequence of committed stage solutions.

    Cycling cost is read off the per-segment discharge, so the caller must
    pass segment splits that follow the cheapest-first ladder when the
    optimizer did not price cycling itself.
    """
    report = MetricsReport(case=str(case), method=str(method))
    if not solutions:
        return report
    dt = np.concatenate([np.full(s.hours, s.dt_hours) for s in solutions])
    report.hours = float(dt.sum())
    for g in spec.generators:
        report.diesel_cost += float((_concat(solutions, "generation", g.name) * dt).sum() * g.marginal_cost)
    for d in spec.loads:
        report.load_shedding_cost += float((_concat(solutions, "shed", d.name) * dt).sum() * d.shed_cost)
    for r in spec.vres:
        report.vres_mwh += float((_concat(solutions, "vres", r.name) * dt).sum() / 1000.0)
    for s in spec.storages:
        ch = _concat(solutions, "charge", s.name)
        dis = _concat(solutions, "discharge", s.name)
        charged = float((ch.sum(axis=1) * dt).sum() / 1000.0)
        discharged = float((dis.sum(axis=1) * dt).sum() / 1000.0)
        tab = tables.get(s.name)
        if tab is None:
            report.h2_charge_mwh += charged
            report.h2_discharge_mwh += discharged
            continue
        report.battery_charge_mwh += charged
        report.battery_discharge_mwh += discharged
        report.dod_cost += float(((dis * tab.dod_costs).sum(axis=1) * dt).sum())
        level = s.soc_min + _concat(solutions, "soc", s.name).sum(axis=1)
        up, dn = tab.soc_split(level)
        report.soc_up_cost += float(((up @ tab.soc_up_costs) * dt).sum()) if len(tab.soc_up_costs) else 0.0
        report.soc_down_cost += float(((dn @ tab.soc_dn_costs) * dt).sum()) if len(tab.soc_dn_costs) else 0.0
    report.total_cost = (
        report.diesel_cost + report.load_shedding_cost + report.dod_cost + report.soc_up_cost + report.soc_down_cost
    )
    return report


def estimate_lifetime(report: MetricsReport, f_sigma: SocFade, R_total: float) -> LifetimeEstimate:
    """Years until end of life if the simulated period repeated indefinitely.

    The calendar baseline is the hourly fade at the exponential's reference
    level; priced degradation is converted back to fade units through the
    replacement cost and annualized.
    """
    if report.hours <= 0:
        raise ValidationError(["lifetime: zero-length simulation window"])
    if R_total <= 0:
        raise ValidationError([f"lifetime: replacement cost must be positive ({R_total})"])
    calendar = HOURS_PER_YEAR * float(f_sigma(f_sigma.sigma_ref_exp))
    priced = report.degradation_cost * HOURS_PER_YEAR / report.hours / R_total
    annual = calendar + priced
    return LifetimeEstimate(annual, 1.0 / annual if annual > 0 else math.inf)


# --- files -------------------------------------------------------------------------


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def emit_report(reports: Union[MetricsReport, Sequence[MetricsReport]], path: Union[str, Path, None], fmt: str = "csv") -> str:
    """Write reports as CSV (one row each) or JSON (a list). Returns the text.

    Floats are written in their shortest round-tripping form, so the JSON
    and CSV files reproduce the values exactly.
    """
    if isinstance(reports, MetricsReport):
        reports = [reports]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in reports:
            row = r.to_dict()
            writer.writerow([_fmt(row[c]) for c in REPORT_COLUMNS])
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
    else:
        raise ValidationError([f"report format: {fmt!r} is not csv or json"])
    if path is not None:
        Path(path).write_text(text)
    return text


def read_report(path: Union[str, Path]) -> List[MetricsReport]:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        raw = json.loads(text)
        return [MetricsReport.from_dict(r) for r in raw]
    rows = list(csv.DictReader(io.StringIO(text)))
    return [MetricsReport.from_dict(r) for r in rows]
