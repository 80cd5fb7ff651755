"""Hourly dispatch LP of one stage, with segment ladders for battery ageing.

Storage content is split into equally sized depth segments whose energy
balances are tracked separately; the per-segment content at the end of the
stage is the state passed to the next stage. Each stage LP also carries an
epigraph variable ``theta`` bounding the expected cost of later stages from
below through cut rows.

All cost terms are multiplied by the step length, so marginal costs in EUR/kWh
(or EUR/kWh/h for the state-of-charge ladder) give euros for any resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .degradation import DegradationTables
from .lp import OPTIMAL, LinearProgram, LpSolution, SolveError
from .system import StageRealization, StateVector, SystemSpec, ValidationError


class _Builder:
    def __init__(self):
        self.n_cols = 0
        self.n_rows = 0
        self.columns: Dict[str, np.ndarray] = {}
        self.rows: Dict[str, np.ndarray] = {}
        self.c: List[np.ndarray] = []
        self.lb: List[np.ndarray] = []
        self.ub: List[np.ndarray] = []
        self.sense: List[np.ndarray] = []
        self.rhs: List[np.ndarray] = []
        self.tri_r: List[np.ndarray] = []
        self.tri_c: List[np.ndarray] = []
        self.tri_v: List[np.ndarray] = []

    def cols(self, name, shape, lb=0.0, ub=np.inf, cost=0.0):
        n = int(np.prod(shape))
        idx = np.arange(self.n_cols, self.n_cols + n).reshape(shape)
        self.n_cols += n
        self.columns[name] = idx
        self.c.append(np.broadcast_to(np.asarray(cost, dtype=float), shape).ravel())
        self.lb.append(np.broadcast_to(np.asarray(lb, dtype=float), shape).ravel())
        self.ub.append(np.broadcast_to(np.asarray(ub, dtype=float), shape).ravel())
        return idx

    def rowblock(self, name, shape, sense, rhs=0.0):
        n = int(np.prod(shape))
        idx = np.arange(self.n_rows, self.n_rows + n).reshape(shape)
        self.n_rows += n
        self.rows[name] = idx
        self.sense.append(np.full(n, sense))
        self.rhs.append(np.broadcast_to(np.asarray(rhs, dtype=float), shape).ravel())
        return idx

    def coef(self, rows, cols, value):
        rows, cols = np.broadcast_arrays(np.asarray(rows), np.asarray(cols))
        vals = np.broadcast_to(np.asarray(value, dtype=float), rows.shape)
        self.tri_r.append(rows.ravel())
        self.tri_c.append(cols.ravel())
        self.tri_v.append(vals.ravel())

    def finish(self) -> LinearProgram:
        cat = lambda parts, dtype=float: np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)
        A = sp.csr_matrix(
            (cat(self.tri_v), (cat(self.tri_r, int), cat(self.tri_c, int))), shape=(self.n_rows, self.n_cols)
        )
        return LinearProgram(
            c=cat(self.c), A=A, sense=cat(self.sense, "<U1"), rhs=cat(self.rhs),
            lb=cat(self.lb), ub=cat(self.ub), columns=self.columns, rows=self.rows,
        )


def storage_segments(spec: SystemSpec, tables: Mapping[str, DegradationTables]) -> Dict[str, int]:
    """Number of depth segments per storage; storages without tables use one."""
    return {s.name: (tables[s.name].n_dod if s.name in tables else 1) for s in spec.storages}


def build_stage_subproblem(
    spec: SystemSpec,
    tables: Mapping[str, DegradationTables],
    hours: int,
    dt_hours: float,
    realization: StageRealization,
    soc_flag: bool,
    dod_flag: bool,
    theta_min: float = 0.0,
    incoming_state: Optional[StateVector] = None,
) -> LinearProgram:
    if hours < 1:
        raise ValidationError([f"stage.hours: must be positive ({hours})"])
    realization.check(spec, hours)
    missing = [
        s.name for s in spec.storages
        if s.degradation is not None and (soc_flag or dod_flag) and s.name not in tables
    ]
    if missing:
        raise ValidationError([f"{name}: missing degradation tables" for name in missing])

    H, dt = hours, float(dt_hours)
    b = _Builder()
    balance = b.rowblock("balance", (H,), "=", _total_demand(spec, realization, H))

    for g in spec.generators:
        col = b.cols(f"gen:{g.name}", (H,), 0.0, g.p_max, g.marginal_cost * dt)
        b.coef(balance, col, 1.0)
    for r in spec.vres:
        col = b.cols(f"vres:{r.name}", (H,), 0.0, realization.vres[r.name])
        b.coef(balance, col, 1.0)
    for d in spec.loads:
        col = b.cols(f"shed:{d.name}", (H,), 0.0, realization.demand[d.name], d.shed_cost * dt)
        b.coef(balance, col, 1.0)

    segs = storage_segments(spec, tables)
    state_rows, state_labels, out_cols = [], [], []
    for s in spec.storages:
        K = segs[s.name]
        tab = tables.get(s.name)
        width = s.usable / K
        dod_cost = tab.dod_costs * dt if (dod_flag and tab is not None) else 0.0
        ch = b.cols(f"charge:{s.name}", (H, K), 0.0, s.p_charge_max)
        dis = b.cols(f"discharge:{s.name}", (H, K), 0.0, s.p_discharge_max, dod_cost)
        soc = b.cols(f"soc:{s.name}", (H, K), 0.0, width)
        x_in = b.cols(f"state:{s.name}", (K,), -np.inf, np.inf)

        b.coef(balance[:, None], dis, 1.0)
        b.coef(balance[:, None], ch, -1.0)
        csum = b.rowblock(f"charge_sum:{s.name}", (H,), "<", s.p_charge_max)
        b.coef(csum[:, None], ch, 1.0)
        dsum = b.rowblock(f"discharge_sum:{s.name}", (H,), "<", s.p_discharge_max)
        b.coef(dsum[:, None], dis, 1.0)

        energy = b.rowblock(f"energy:{s.name}", (H, K), "=")
        b.coef(energy, soc, 1.0)
        b.coef(energy[1:], soc[:-1], -1.0)
        b.coef(energy[0], x_in, -1.0)
        b.coef(energy, ch, -dt * s.eta_c)
        b.coef(energy, dis, dt / s.eta_d)

        fix = b.rowblock(f"state:{s.name}", (K,), "=")
        b.coef(fix, x_in, 1.0)
        state_rows.append(fix)
        state_labels += [f"{s.name}[{k}]" for k in range(K)]
        out_cols.append(soc[-1])

        if soc_flag and tab is not None:
            if len(tab.soc_up_costs):
                up = b.cols(f"soc_up:{s.name}", (H, len(tab.soc_up_costs)), 0.0, tab.soc_up_width, tab.soc_up_costs * dt)
                row = b.rowblock(f"soc_up:{s.name}", (H,), ">", s.soc_min - tab.soc_ref_energy)
                b.coef(row[:, None], up, 1.0)
                b.coef(row[:, None], soc, -1.0)
            if len(tab.soc_dn_costs):
                dn = b.cols(f"soc_dn:{s.name}", (H, len(tab.soc_dn_costs)), 0.0, tab.soc_dn_width, tab.soc_dn_costs * dt)
                row = b.rowblock(f"soc_dn:{s.name}", (H,), ">", tab.soc_ref_energy - s.soc_min)
                b.coef(row[:, None], dn, 1.0)
                b.coef(row[:, None], soc, 1.0)

    theta = b.cols("theta", (1,), theta_min, np.inf, 1.0)
    lp = b.finish()
    lp.theta_col = int(theta[0])
    lp.state_rows = np.concatenate(state_rows) if state_rows else np.zeros(0, dtype=int)
    lp.state_labels = state_labels
    lp.state_out_cols = np.concatenate(out_cols) if out_cols else np.zeros(0, dtype=int)
    lp.hours = H
    lp.dt_hours = dt
    lp.segments = segs
    if incoming_state is not None:
        lp.rhs[lp.state_rows] = incoming_state.as_array(list(segs))
    return lp


def _total_demand(spec: SystemSpec, realization: StageRealization, H: int) -> np.ndarray:
    total = np.zeros(H)
    for d in spec.loads:
        total += realization.demand[d.name]
    return total


def realization_updates(lp: LinearProgram, spec: SystemSpec, realization: StageRealization):
    """Row right-hand sides and column bounds that encode ``realization`` in ``lp``.

    Returns ``(rows, rhs, cols, lower, upper)``.
    """
    H = lp.hours
    realization.check(spec, H)
    cols, upper = [], []
    for r in spec.vres:
        cols.append(lp.columns[f"vres:{r.name}"])
        upper.append(realization.vres[r.name])
    for d in spec.loads:
        cols.append(lp.columns[f"shed:{d.name}"])
        upper.append(realization.demand[d.name])
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
    upper = np.concatenate(upper) if upper else np.zeros(0)
    return lp.rows["balance"], _total_demand(spec, realization, H), cols, np.zeros(len(cols)), upper


@dataclass
class StageSolution:
    dt_hours: float
    generation: Dict[str, np.ndarray]
    vres: Dict[str, np.ndarray]
    shed: Dict[str, np.ndarray]
    charge: Dict[str, np.ndarray]  # (hours, segments), kW
    discharge: Dict[str, np.ndarray]
    soc: Dict[str, np.ndarray]  # (hours, segments), kWh at the end of each hour
    soc_up: Dict[str, np.ndarray] = field(default_factory=dict)
    soc_dn: Dict[str, np.ndarray] = field(default_factory=dict)
    hourly_cost: np.ndarray = field(default_factory=lambda: np.zeros(0))
    future_cost_estimate: float = 0.0
    state_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective: float = 0.0

    @property
    def hours(self) -> int:
        return len(self.hourly_cost)

    @property
    def immediate_cost(self) -> float:
        return float(self.hourly_cost.sum())

    @property
    def outgoing_state(self) -> StateVector:
        return StateVector({k: v[-1] for k, v in self.soc.items()})

    def storage_total(self, name: str) -> np.ndarray:
        return self.soc[name].sum(axis=1)

    def head(self, n: int) -> "StageSolution":
        """The first ``n`` hours, e.g. the part of a stage that is committed."""
        cut = lambda d: {k: v[:n] for k, v in d.items()}
        return StageSolution(
            dt_hours=self.dt_hours, generation=cut(self.generation), vres=cut(self.vres), shed=cut(self.shed),
            charge=cut(self.charge), discharge=cut(self.discharge), soc=cut(self.soc),
            soc_up=cut(self.soc_up), soc_dn=cut(self.soc_dn), hourly_cost=self.hourly_cost[:n].copy(),
            future_cost_estimate=float("nan"), objective=float("nan"),
        )


def extract_solution(sol: LpSolution, lp: LinearProgram) -> StageSolution:
    if sol.status != OPTIMAL:
        raise SolveError(f"stage LP not optimal: {sol.status} {sol.message}".strip(), sol)
    # nonnegative quantities; clip solver noise below zero
    x = np.maximum(sol.primal, 0.0)
    groups: Dict[str, Dict[str, np.ndarray]] = {}
    H = lp.hours
    hourly = np.zeros(H)
    weighted = lp.c * sol.primal
    for key, idx in lp.columns.items():
        kind, _, name = key.partition(":")
        if kind in ("theta", "state"):
            continue
        groups.setdefault(kind, {})[name] = x[idx]
        per_hour = weighted[idx]
        hourly += per_hour.reshape(H, -1).sum(axis=1)
    theta = float(sol.primal[lp.theta_col]) if lp.theta_col is not None else 0.0
    return StageSolution(
        dt_hours=lp.dt_hours,
        generation=groups.get("gen", {}),
        vres=groups.get("vres", {}),
        shed=groups.get("shed", {}),
        charge=groups.get("charge", {}),
        discharge=groups.get("discharge", {}),
        soc=groups.get("soc", {}),
        soc_up=groups.get("soc_up", {}),
        soc_dn=groups.get("soc_dn", {}),
        hourly_cost=hourly,
        future_cost_estimate=theta,
        state_duals=sol.duals[lp.state_rows].copy() if len(lp.state_rows) else np.zeros(0),
        objective=sol.objective,
    )
