"""Linear programs and the solve contract used by the rest of the package.

Programs are minimisations ``min c'x`` over rows ``A x (<=|=|>=) rhs`` and
column bounds. HiGHS (through ``highspy``) is the engine; this module hides it
behind :func:`solve` and :class:`PersistentLp`, the latter keeping a model
alive so right-hand sides and bounds can be swapped and cut rows appended
between warm-started solves.

Row duals follow the sensitivity convention: ``duals[i]`` is the derivative
of the optimal objective with respect to ``rhs[i]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import highspy
import numpy as np
import scipy.sparse as sp

INF = highspy.kHighsInf
PRIMAL_TOL = 1e-7
GAP_TOL = 1e-6
FEAS_TOL = 1e-9  # engine feasibility tolerance, tighter than the contract

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL = "numerical_error"


class SolveError(RuntimeError):
    """Raised when an LP that must be solvable is not solved to optimality."""

    def __init__(self, message: str, solution: Optional["LpSolution"] = None):
        super().__init__(message)
        self.solution = solution


@dataclass
class LinearProgram:
    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray  # one of "<", "=", ">" per row
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    columns: Dict[str, np.ndarray] = field(default_factory=dict)
    rows: Dict[str, np.ndarray] = field(default_factory=dict)
    state_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    state_labels: List[str] = field(default_factory=list)
    cut_rows: List[int] = field(default_factory=list)
    theta_col: Optional[int] = None
    state_out_cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    # stage layout, set by the subproblem builder
    hours: int = 0
    dt_hours: float = 1.0
    segments: Dict[str, int] = field(default_factory=dict)

    @property
    def shape(self):
        return self.A.shape

    def row_bounds(self):
        lower = np.where(self.sense == "<", -INF, self.rhs)
        upper = np.where(self.sense == ">", INF, self.rhs)
        return lower.astype(float), upper.astype(float)

    def add_rows(self, A_new, sense, rhs) -> np.ndarray:
        A_new = sp.csr_matrix(A_new)
        first = self.A.shape[0]
        self.A = sp.vstack([self.A, A_new], format="csr")
        self.sense = np.concatenate([self.sense, np.asarray(sense)])
        self.rhs = np.concatenate([self.rhs, np.asarray(rhs, dtype=float)])
        return np.arange(first, self.A.shape[0])

    def add_cut(self, alpha: float, beta: np.ndarray, state_cols: np.ndarray) -> int:
        """Append ``theta >= alpha + beta . x`` over the given columns."""
        if self.theta_col is None:
            raise ValueError("program has no epigraph variable")
        row = cut_row(self.A.shape[1], self.theta_col, state_cols, beta)
        (idx,) = self.add_rows(row, [">"], [alpha])
        self.cut_rows.append(int(idx))
        return int(idx)

    def check(self) -> None:
        m, n = self.A.shape
        sizes = dict(c=len(self.c), lb=len(self.lb), ub=len(self.ub))
        if any(v != n for v in sizes.values()) or len(self.rhs) != m or len(self.sense) != m:
            raise ValueError(f"inconsistent LP dimensions: A is {m}x{n}, {sizes}, rhs {len(self.rhs)}")
        for name, arr in (("c", self.c), ("rhs", self.rhs), ("A", self.A.data)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")
        if not set(np.unique(self.sense)) <= {"<", "=", ">"}:
            raise ValueError("row senses must be '<', '=' or '>'")

    def write(self, path: str) -> None:
        """Dump the program in CPLEX LP format for inspection with other tools."""
        h = _new_highs()
        _pass(h, self)
        h.writeModel(str(path))


def cut_row(n_cols: int, theta_col: int, state_cols: np.ndarray, beta: np.ndarray) -> sp.csr_matrix:
    cols = np.concatenate([[theta_col], state_cols])
    vals = np.concatenate([[1.0], -np.asarray(beta, dtype=float)])
    return sp.csr_matrix((vals, (np.zeros(len(cols), dtype=int), cols)), shape=(1, n_cols))


@dataclass
class LpSolution:
    status: str
    objective: float = float("nan")
    primal: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    primal_residual: float = float("nan")
    duality_gap: float = float("nan")
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _new_highs() -> highspy.Highs:
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("random_seed", 0)
    # ageing costs are ~1e-4 EUR/kWh on states of thousands of kWh; the default
    # 1e-7 feasibility tolerances let objectives drift by ~1e-5 EUR
    h.setOptionValue("primal_feasibility_tolerance", FEAS_TOL)
    h.setOptionValue("dual_feasibility_tolerance", FEAS_TOL)
    return h


def _pass(h: highspy.Highs, lp: LinearProgram) -> None:
    A = sp.csc_matrix(lp.A)
    model = highspy.HighsLp()
    model.num_col_ = A.shape[1]
    model.num_row_ = A.shape[0]
    model.col_cost_ = np.asarray(lp.c, dtype=float)
    model.col_lower_ = np.where(np.isfinite(lp.lb), lp.lb, -INF).astype(float)
    model.col_upper_ = np.where(np.isfinite(lp.ub), lp.ub, INF).astype(float)
    lower, upper = lp.row_bounds()
    model.row_lower_ = lower
    model.row_upper_ = upper
    model.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    model.a_matrix_.start_ = A.indptr.astype(np.int32)
    model.a_matrix_.index_ = A.indices.astype(np.int32)
    model.a_matrix_.value_ = A.data.astype(float)
    h.passModel(model)


_STATUS = {
    highspy.HighsModelStatus.kOptimal: OPTIMAL,
    highspy.HighsModelStatus.kInfeasible: INFEASIBLE,
    highspy.HighsModelStatus.kUnbounded: UNBOUNDED,
    highspy.HighsModelStatus.kModelEmpty: OPTIMAL,
}


def _run(h: highspy.Highs) -> str:
    h.run()
    status = h.getModelStatus()
    presolve = h.getOptionValue("presolve")
    if status == highspy.HighsModelStatus.kUnboundedOrInfeasible:
        # presolve cannot tell which; the simplex without presolve can
        h.setOptionValue("presolve", "off")
        h.run()
        h.setOptionValue("presolve", presolve)
        status = h.getModelStatus()
    return _STATUS.get(status, NUMERICAL)


def _collect(h: highspy.Highs, status: str) -> LpSolution:
    if status != OPTIMAL:
        return LpSolution(status=status, message=h.modelStatusToString(h.getModelStatus()))
    sol = h.getSolution()
    return LpSolution(
        status=OPTIMAL,
        objective=float(h.getInfo().objective_function_value),
        primal=np.array(sol.col_value),
        duals=np.array(sol.row_dual),
        reduced_costs=np.array(sol.col_dual),
    )


def certify(lp: LinearProgram, sol: LpSolution) -> LpSolution:
    """Fill in the primal residual and duality gap of an optimal solution.

    Both are recomputed from the returned vectors, independently of the engine.
    Rows are scaled by their largest coefficient before measuring violation.
    """
    if not sol.optimal:
        return sol
    x, y = sol.primal, sol.duals
    A = sp.csr_matrix(lp.A)
    lower, upper = lp.row_bounds()
    activity = A @ x
    row_scale = np.ones(A.shape[0])
    if A.nnz:
        row_scale = np.maximum(abs(A).max(axis=1).toarray().ravel(), 1e-300)
    viol = np.maximum(np.maximum(lower - activity, activity - upper), 0.0) / np.where(row_scale > 0, row_scale, 1.0)
    col_viol = np.maximum(np.maximum(lp.lb - x, x - lp.ub), 0.0)
    sol.primal_residual = float(max(viol.max(initial=0.0), col_viol.max(initial=0.0)))

    # dual objective: rhs priced by row duals plus active column bounds priced by reduced costs
    z = lp.c - A.T @ y
    with np.errstate(invalid="ignore"):
        return _finish_certificate(lp, sol, x, y, z, lower, upper)


def _finish_certificate(lp, sol, x, y, z, lower, upper):
    row_term = np.where(y > 0, lower, upper) * y
    row_term = np.where(y == 0, 0.0, row_term)
    col_term = np.where(z > 0, lp.lb, lp.ub) * z
    col_term = np.where(z == 0, 0.0, col_term)
    if not (np.all(np.isfinite(row_term)) and np.all(np.isfinite(col_term))):
        # a nonzero price on an infinite bound means the duals are not feasible
        finite_rows = np.isfinite(row_term)
        finite_cols = np.isfinite(col_term)
        bad = float(np.abs(y[~finite_rows]).max(initial=0.0) + np.abs(z[~finite_cols]).max(initial=0.0))
        row_term = np.where(finite_rows, row_term, 0.0)
        col_term = np.where(finite_cols, col_term, 0.0)
    else:
        bad = 0.0
    dual_obj = float(row_term.sum() + col_term.sum())
    sol.duality_gap = abs(float(lp.c @ x) - dual_obj) + bad
    return sol


def solve(lp: LinearProgram, check: bool = True) -> LpSolution:
    """Solve ``lp`` from scratch.

    A solution reported optimal whose certificate violates the primal or gap
    tolerance is downgraded to ``numerical_error``.
    """
    lp.check()
    h = _new_highs()
    _pass(h, lp)
    sol = _collect(h, _run(h))
    if check and sol.optimal:
        certify(lp, sol)
        if sol.primal_residual > PRIMAL_TOL or sol.duality_gap > GAP_TOL * (1.0 + abs(sol.objective)):
            sol.message = f"certificate failed: residual {sol.primal_residual:.3g}, gap {sol.duality_gap:.3g}"
            sol.status = NUMERICAL
    return sol


class PersistentLp:
    """A HiGHS model kept in memory for repeated warm-started solves."""

    def __init__(self, lp: LinearProgram):
        lp.check()
        self.lp = lp
        self.sense = np.array(lp.sense)
        self.h = _new_highs()
        _pass(self.h, lp)

    @property
    def num_rows(self) -> int:
        return len(self.sense)

    def set_rhs(self, rows: np.ndarray, values: np.ndarray) -> None:
        rows = np.asarray(rows, dtype=np.int32)
        values = np.asarray(values, dtype=float)
        sense = self.sense[rows]
        lower = np.where(sense == "<", -INF, values)
        upper = np.where(sense == ">", INF, values)
        self.h.changeRowsBounds(len(rows), rows, lower, upper)

    def set_col_bounds(self, cols: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> None:
        cols = np.asarray(cols, dtype=np.int32)
        self.h.changeColsBounds(len(cols), cols, np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))

    def add_rows(self, A_new, sense, rhs) -> np.ndarray:
        A_new = sp.csr_matrix(A_new)
        sense = np.asarray(sense)
        rhs = np.asarray(rhs, dtype=float)
        lower = np.where(sense == "<", -INF, rhs)
        upper = np.where(sense == ">", INF, rhs)
        first = self.num_rows
        self.h.addRows(
            A_new.shape[0], lower, upper, A_new.nnz,
            A_new.indptr.astype(np.int32), A_new.indices.astype(np.int32), A_new.data.astype(float),
        )
        self.sense = np.concatenate([self.sense, sense])
        return np.arange(first, self.num_rows)

    def solve(self) -> LpSolution:
        status = _run(self.h)
        if status == NUMERICAL:
            # a stale warm-start basis occasionally stalls the simplex; retry cold
            self.h.clearSolver()
            status = _run(self.h)
        return _collect(self.h, status)
