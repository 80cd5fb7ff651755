"""Rolling-horizon operation of a microgrid over observed data.

At every roll instant a scenario tree is built from the latest forecast, an
SDDP policy is trained on it, and the first node is re-solved with the
observed data for the roll interval; only that interval is committed and its
end state starts the next window. The perfect-information benchmark instead
solves one LP over the whole observation window.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional

import numpy as np
import pandas as pd

from .config import SimulationConfig
from .degradation import DegradationTables, fill_cheapest, ladder_step, make_tables
from .lp import solve
from .metrics import MetricsReport, accumulate_metrics, estimate_lifetime
from .scenario import ForecastArchive, ScenarioSet, TimeSeriesSet, median_set, scenario_set, daily_mean_quantiles, to_realization
from .sddp import PolicyGraph, SDDPPolicy, StageNode, TrainingLog
from .subproblem import StageSolution, build_stage_subproblem, extract_solution, storage_segments
from .system import StateVector, SystemSpec, ValidationError

log = logging.getLogger(__name__)


@dataclass
class SimulationResult:
    report: MetricsReport
    solutions: List[StageSolution]
    traces: pd.DataFrame
    training: List[TrainingLog] = field(default_factory=list)
    states: List[StateVector] = field(default_factory=list)  # incoming state of every window


def initial_state(spec: SystemSpec, tables: Mapping[str, DegradationTables], fraction: float = 0.5) -> StateVector:
    """Storage content at ``fraction`` of usable energy, cheapest segments filled first."""
    segs = storage_segments(spec, tables)
    return StateVector({
        s.name: fill_cheapest(fraction * s.usable, s.usable / segs[s.name], segs[s.name]) for s in spec.storages
    })


def canonicalize(sol: StageSolution, spec: SystemSpec, tables: Mapping[str, DegradationTables], incoming: StateVector) -> StageSolution:
    """Re-split storage flows over the segment ladder, cheapest segment first.

    Used when the optimizer did not price cycling, in which case the split it
    returned is arbitrary. Totals per hour are unchanged.
    """
    dt = sol.dt_hours
    charge, discharge, soc = dict(sol.charge), dict(sol.discharge), dict(sol.soc)
    for s in spec.storages:
        if s.name not in tables:
            continue
        K = sol.soc[s.name].shape[1]
        width = s.usable / K
        state = np.array(incoming.segments[s.name], dtype=float)
        ch_out, dis_out, soc_out = (np.zeros((sol.hours, K)) for _ in range(3))
        for t in range(sol.hours):
            stored = sol.charge[s.name][t].sum() * s.eta_c * dt
            withdrawn = sol.discharge[s.name][t].sum() / s.eta_d * dt
            # solver noise may leave a withdrawal marginally above the content
            withdrawn = min(withdrawn, state.sum() + stored)
            state, ch, dis = ladder_step(state, width, stored, withdrawn)
            ch_out[t] = ch / (s.eta_c * dt)
            dis_out[t] = dis * s.eta_d / dt
            soc_out[t] = state
        charge[s.name], discharge[s.name], soc[s.name] = ch_out, dis_out, soc_out
    return StageSolution(
        dt_hours=dt, generation=sol.generation, vres=sol.vres, shed=sol.shed, charge=charge,
        discharge=discharge, soc=soc, soc_up=sol.soc_up, soc_dn=sol.soc_dn, hourly_cost=sol.hourly_cost,
        future_cost_estimate=sol.future_cost_estimate, state_duals=sol.state_duals, objective=sol.objective,
    )


def history_window(data: TimeSeriesSet, t: int, days: int) -> TimeSeriesSet:
    """The ``days`` whole days before hour ``t``, shifted forward when data start later."""
    hours = 24 * days
    lo = max(0, t - hours)
    hi = min(len(data), lo + hours)
    return data.slice(lo, hi)


def build_graph(config: SimulationConfig, data: TimeSeriesSet, forecasts: Optional[ForecastArchive], t: int) -> PolicyGraph:
    """Scenario tree of the window starting at hour ``t``.

    Without a forecast archive, in-horizon nodes fall back to historical
    daily-mean scenarios like the cyclic node.
    """
    spec, layout, method = config.system, config.layout, config.method
    make = median_set if method.forecast == "deterministic" else scenario_set
    history = history_window(data, t, config.history_days)
    q = forecasts.at(data.timestamps[t], layout.forecast_hours) if forecasts is not None and layout.forecast_hours else None
    nodes = []
    for i, (offset, hours) in enumerate(zip(layout.offsets(), layout.durations)):
        last = i == len(layout.durations) - 1
        if last or q is None:
            source = daily_mean_quantiles(history, hours, min_days=config.history_days)
        else:
            source = q.slice(offset, offset + hours)
        scenarios: ScenarioSet = make(spec, source, config.series)
        nodes.append(StageNode(hours, scenarios.realizations, method.soc_flag, method.dod_flag))
    return PolicyGraph(nodes, discount=layout.discount, cyclic=True)


def _window_seed(seed: int, window: int) -> int:
    return int(np.random.SeedSequence([seed, window]).generate_state(1)[0])


def _first_node_realization(config, data, forecasts, t, n):
    spec, layout = config.system, config.layout
    hours = layout.durations[0]
    values = data.window(t, n)
    if n < hours:
        # the uncommitted tail of the first node sees the medium forecast
        if forecasts is not None:
            tail = forecasts.at(data.timestamps[t], hours).median()
        else:
            tail = daily_mean_quantiles(history_window(data, t, config.history_days), hours, config.history_days).median()
        values = {k: np.concatenate([v, tail[k][n:]]) for k, v in values.items()}
    return to_realization(spec, values, 1.0, config.series)


def run_rolling_horizon(
    config: SimulationConfig,
    data: TimeSeriesSet,
    forecasts: Optional[ForecastArchive] = None,
    progress: Optional[Callable[[int, int], None]] = None,
) -> SimulationResult:
    config.validate()
    spec, method = config.system, config.method
    tables = {s.name: make_tables(s) for s in spec.degrading_storages}
    start = config.start
    total = config.hours if config.hours is not None else len(data) - start
    if total <= 0 or start + total > len(data):
        raise ValidationError([f"simulation window [{start}, {start + total}) outside the {len(data)} observed hours"])
    state = initial_state(spec, tables, config.initial_soc_fraction)
    solutions: List[StageSolution] = []
    logs: List[TrainingLog] = []
    states: List[StateVector] = []

    if method.forecast == "perfect":
        realization = to_realization(spec, data.window(start, total), 1.0, config.series)
        lp = build_stage_subproblem(
            spec, tables, total, 1.0, realization, soc_flag=True, dod_flag=True,
            theta_min=config.theta_min, incoming_state=state,
        )
        states.append(state)
        sol = extract_solution(solve(lp), lp)
        solutions.append(sol.head(total))
    else:
        roll = config.layout.roll_hours
        starts = list(range(start, start + total, roll))
        for w, t in enumerate(starts):
            n = min(roll, start + total - t)
            graph = build_graph(config, data, forecasts, t)
            policy = SDDPPolicy(graph, spec, tables, config.theta_min)
            policy.train(state, config.iterations, seed=_window_seed(config.seed, w))
            logs.append(policy.log)
            observed = _first_node_realization(config, data, forecasts, t, n)
            sol = policy.evaluate_stage(0, state, observed).head(n)
            if not method.dod_flag:
                sol = canonicalize(sol, spec, tables, state)
            states.append(state)
            solutions.append(sol)
            state = sol.outgoing_state
            if progress is not None:
                progress(w + 1, len(starts))
            log.debug("window %d/%d at hour %d: bound %.6g", w + 1, len(starts), t, policy.log.lower_bound[-1])

    report = accumulate_metrics(solutions, spec, tables, case=str(config.case or "custom"), method=method.name)
    batteries = spec.degrading_storages
    if batteries:
        b = batteries[0]
        report.lifetime_years = estimate_lifetime(report, b.degradation.soc, b.replacement_cost_total).years
    traces = build_traces(solutions, spec, data, start, config)
    return SimulationResult(report, solutions, traces, logs, states)


def build_traces(solutions: List[StageSolution], spec: SystemSpec, data: TimeSeriesSet, start: int, config: SimulationConfig) -> pd.DataFrame:
    """Hourly committed dispatch, one column per quantity."""
    hours = sum(s.hours for s in solutions)
    cat = lambda attr, name: np.concatenate([getattr(s, attr)[name] for s in solutions]) if solutions else np.zeros(0)
    frame = pd.DataFrame({"timestamp": data.timestamps[start:start + hours].strftime("%Y-%m-%dT%H:%M:%SZ")})
    observed = to_realization(spec, data.window(start, hours), 1.0, config.series)
    for g in spec.generators:
        frame[f"{g.name}_kw"] = cat("generation", g.name)
    for r in spec.vres:
        frame[f"{r.name}_available_kw"] = observed.vres[r.name]
        frame[f"{r.name}_kw"] = cat("vres", r.name)
    for d in spec.loads:
        frame[f"{d.name}_demand_kw"] = observed.demand[d.name]
        frame[f"{d.name}_shed_kw"] = cat("shed", d.name)
    for s in spec.storages:
        frame[f"{s.name}_charge_kw"] = cat("charge", s.name).sum(axis=1)
        frame[f"{s.name}_discharge_kw"] = cat("discharge", s.name).sum(axis=1)
        frame[f"{s.name}_soc_kwh"] = s.soc_min + cat("soc", s.name).sum(axis=1)
    frame["cost_eur"] = np.concatenate([s.hourly_cost for s in solutions]) if solutions else np.zeros(0)
    return frame
