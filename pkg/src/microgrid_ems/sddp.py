"""Stochastic dual dynamic programming over a linear chain of stage nodes.

The chain may end in a cyclic node that loops onto itself with a discount
factor, which stands in for an infinite horizon. Uncertainty is stagewise
independent: every node owns a discrete set of weighted realizations.

Each node keeps one persistent LP per realization. Realizations only change
right-hand sides and column bounds, and cuts are appended as rows, so
successive solves are warm started.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .degradation import DegradationTables
from .lp import LinearProgram, PersistentLp, SolveError, cut_row
from .subproblem import StageSolution, build_stage_subproblem, extract_solution, realization_updates
from .system import StageRealization, StateVector, SystemSpec, ValidationError

log = logging.getLogger(__name__)


@dataclass
class StageNode:
    hours: int
    scenarios: List[StageRealization]
    soc_flag: bool = False
    dod_flag: bool = False
    dt_hours: float = 1.0

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([s.probability for s in self.scenarios])


@dataclass
class PolicyGraph:
    nodes: List[StageNode]
    discount: float = 0.7
    cyclic: bool = True  # the final node loops onto itself

    def validate(self) -> "PolicyGraph":
        errors = []
        if not self.nodes:
            errors.append("graph.nodes: at least one node is required")
        if not 0.0 <= self.discount < 1.0:
            errors.append(f"graph.discount: must lie in [0, 1) ({self.discount})")
        for i, node in enumerate(self.nodes):
            if not node.scenarios:
                errors.append(f"node[{i}]: no realizations")
                continue
            total = node.probabilities.sum()
            if abs(total - 1.0) > 1e-9:
                errors.append(f"node[{i}]: probabilities sum to {total!r}, not 1")
            for s in node.scenarios:
                if s.hours != node.hours:
                    errors.append(f"node[{i}]: realization covers {s.hours} hours, node has {node.hours}")
                    break
        if errors:
            raise ValidationError(errors)
        return self


@dataclass
class Cut:
    alpha: float
    beta: np.ndarray
    iteration: int = 0
    stage: int = 0

    def __call__(self, x: np.ndarray) -> float:
        return float(self.alpha + self.beta @ x)


@dataclass
class CutPool:
    """Cuts attached to the epigraph variable of each node (already discounted)."""

    cuts: List[List[Cut]]

    def __len__(self):
        return sum(len(c) for c in self.cuts)

    def value(self, node: int, x: np.ndarray, theta_min: float = 0.0) -> float:
        return max([theta_min] + [c(x) for c in self.cuts[node]])


@dataclass
class TrainingLog:
    lower_bound: List[float] = field(default_factory=list)
    sampled_cost: List[float] = field(default_factory=list)
    wall_time: List[float] = field(default_factory=list)


@dataclass
class TrajectoryStep:
    node: int
    scenario: int
    incoming: np.ndarray
    solution: StageSolution


class SDDPPolicy:
    """Cut pools and per-node subproblems for one policy graph."""

    def __init__(
        self,
        graph: PolicyGraph,
        spec: SystemSpec,
        tables: Mapping[str, DegradationTables],
        theta_min: float = 0.0,
    ):
        self.graph = graph.validate()
        self.spec = spec
        self.tables = dict(tables)
        self.theta_min = theta_min
        self.pool = CutPool([[] for _ in graph.nodes])
        self.log = TrainingLog()
        self._lps: List[LinearProgram] = []
        # one warm-started model per realization: a model re-solved for the same
        # realization needs far fewer simplex iterations than one that is switched
        self._models: List[List[PersistentLp]] = []
        self._eval_models: Dict[int, PersistentLp] = {}
        for node in graph.nodes:
            lp = build_stage_subproblem(
                spec, self.tables, node.hours, node.dt_hours, node.scenarios[0],
                node.soc_flag, node.dod_flag, theta_min,
            )
            self._lps.append(lp)
            models = []
            for scenario in node.scenarios:
                model = PersistentLp(lp)
                _apply(model, realization_updates(lp, spec, scenario))
                models.append(model)
            self._models.append(models)
        self.state_labels = self._lps[0].state_labels
        self.segments = self._lps[0].segments

    @property
    def n_nodes(self) -> int:
        return len(self.graph.nodes)

    def state_array(self, state) -> np.ndarray:
        if isinstance(state, StateVector):
            return state.as_array(list(self.segments))
        return np.asarray(state, dtype=float)

    # -- cuts ---------------------------------------------------------------------

    def add_cut(self, node: int, cut: Cut) -> None:
        lp = self._lps[node]
        row = cut_row(lp.A.shape[1], lp.theta_col, lp.state_out_cols, cut.beta)
        for model in self._node_models(node):
            model.add_rows(row, [">"], [cut.alpha])
        self.pool.cuts[node].append(cut)

    def _node_models(self, node: int) -> List[PersistentLp]:
        models = list(self._models[node])
        if node in self._eval_models:
            models.append(self._eval_models[node])
        return models

    def load_pool(self, pool: CutPool) -> None:
        if len(pool.cuts) != self.n_nodes:
            raise ValidationError([f"cut pool has {len(pool.cuts)} nodes, graph has {self.n_nodes}"])
        for node, cuts in enumerate(pool.cuts):
            for cut in cuts:
                if len(cut.beta) != len(self.state_labels):
                    raise ValidationError([f"node[{node}]: cut slope has {len(cut.beta)} entries, state has {len(self.state_labels)}"])
                self.add_cut(node, cut)

    # -- solves -------------------------------------------------------------------

    def _solve(self, model: PersistentLp, node: int, x_in: np.ndarray, context: str):
        model.set_rhs(self._lps[node].state_rows, x_in)
        sol = model.solve()
        if not sol.optimal:
            raise SolveError(f"{context}: node {node} subproblem {sol.status} {sol.message}".strip(), sol)
        return sol

    def solve_scenario(self, node: int, x_in, scenario: int, context: str = "solve") -> StageSolution:
        sol = self._solve(self._models[node][scenario], node, self.state_array(x_in), context)
        return extract_solution(sol, self._lps[node])

    def evaluate_stage(self, node: int, incoming_state, realization: StageRealization) -> StageSolution:
        """Solve ``node`` for an arbitrary (e.g. observed) realization against the current cuts."""
        lp = self._lps[node]
        model = self._eval_models.get(node)
        if model is None:
            model = self._eval_models[node] = PersistentLp(lp)
            for cut in self.pool.cuts[node]:
                model.add_rows(cut_row(lp.A.shape[1], lp.theta_col, lp.state_out_cols, cut.beta), [">"], [cut.alpha])
        _apply(model, realization_updates(lp, self.spec, realization))
        sol = self._solve(model, node, self.state_array(incoming_state), "evaluate")
        return extract_solution(sol, lp)

    def lower_bound(self, initial_state) -> float:
        x0 = self.state_array(initial_state)
        node = self.graph.nodes[0]
        return float(sum(
            p * self._solve(self._models[0][w], 0, x0, "lower bound").objective
            for w, p in enumerate(node.probabilities)
        ))

    # -- passes -------------------------------------------------------------------

    def forward_pass(
        self, initial_state, rng: np.random.Generator, cycle_continue: bool = False, u: Optional[float] = None,
    ) -> List[TrajectoryStep]:
        """Sample one realization per node and chain states through the nodes.

        Realizations are drawn independently by probability, or, when a point
        ``u`` in [0, 1) is given, read off it by nested inverse CDF: the first
        node takes the realization whose cumulative interval holds ``u``, and
        ``u`` is rescaled within that interval for the next node. The path is
        then drawn with exactly its probability when ``u`` is uniform.

        With ``cycle_continue`` the cyclic node is revisited with probability
        equal to the discount factor, which makes the summed immediate costs an
        unbiased estimate of the discounted cost of the policy.
        """
        x = self.state_array(initial_state)
        out: List[TrajectoryStep] = []
        last = self.n_nodes - 1
        node = 0
        while True:
            probs = self.graph.nodes[node].probabilities
            if u is not None and node == len(out):
                w, u = _inverse_cdf(probs, u)
            elif len(probs) > 1:
                w = int(rng.choice(len(probs), p=probs))
            else:
                w = 0
            sol = self.solve_scenario(node, x, w, "forward pass")
            out.append(TrajectoryStep(node, w, x, sol))
            x = self.state_array(sol.outgoing_state)
            if node < last:
                node += 1
            elif cycle_continue and self.graph.cyclic and rng.random() < self.graph.discount:
                continue
            else:
                return out

    def _average_cut(self, node: int, x: np.ndarray, iteration: int) -> Cut:
        probs = self.graph.nodes[node].probabilities
        alpha, beta = 0.0, np.zeros(len(x))
        for w, p in enumerate(probs):
            sol = self._solve(self._models[node][w], node, x, f"backward pass iteration {iteration}")
            lam = sol.duals[self._lps[node].state_rows]
            beta += p * lam
            alpha += p * (sol.objective - lam @ x)
        return Cut(alpha, beta, iteration, node)

    def backward_pass(self, trajectory: Sequence[TrajectoryStep], iteration: int = 0) -> List[Tuple[int, Cut]]:
        """Add one averaged cut per linkage, walking the trajectory backwards."""
        added = []
        visits = {}
        for step in trajectory:
            visits.setdefault(step.node, step.incoming)
        last = self.n_nodes - 1
        gamma = self.graph.discount
        for node in range(last, -1, -1):
            self_loop = self.graph.cyclic and node == last
            if node == 0 and not self_loop:
                break
            cut = self._average_cut(node, visits[node], iteration)
            if self_loop:
                own = Cut(gamma * cut.alpha, gamma * cut.beta, iteration, node)
                self.add_cut(node, own)
                added.append((node, own))
            if node > 0:
                self.add_cut(node - 1, cut)
                added.append((node - 1, cut))
        return added

    def train(self, initial_state, iterations: int, seed: int = 0) -> Tuple[CutPool, TrainingLog]:
        """Run ``iterations`` forward/backward passes.

        Forward paths follow a randomly shifted golden-ratio sequence through
        the nested inverse CDF: every path is still drawn with its probability,
        but paths are spread evenly over the iterations instead of clumping, so
        a low-probability branch is not left unvisited for long stretches.
        """
        rng = np.random.default_rng(seed)
        shift = rng.random()
        start = len(self.log.lower_bound)
        for k in range(start, start + iterations):
            t0 = time.perf_counter()
            trajectory = self.forward_pass(initial_state, rng, u=(shift + k * GOLDEN) % 1.0)
            self.backward_pass(trajectory, k)
            self.log.lower_bound.append(self.lower_bound(initial_state))
            self.log.sampled_cost.append(sum(s.solution.immediate_cost for s in trajectory))
            self.log.wall_time.append(time.perf_counter() - t0)
            log.debug("iteration %d: bound %.6g sampled %.6g", k, self.log.lower_bound[-1], self.log.sampled_cost[-1])
        return self.pool, self.log

    def simulate(self, initial_state, n: int, seed: int = 0) -> np.ndarray:
        """Total cost of ``n`` in-sample policy runs, the cycle unrolled stochastically."""
        rng = np.random.default_rng(seed)
        return np.array([
            sum(s.solution.immediate_cost for s in self.forward_pass(initial_state, rng, cycle_continue=True))
            for _ in range(n)
        ])


GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _inverse_cdf(probs: np.ndarray, u: float) -> Tuple[int, float]:
    """Realization whose cumulative interval holds ``u``, and ``u`` rescaled within it."""
    cum = np.cumsum(probs)
    w = min(int(np.searchsorted(cum, u, side="right")), len(probs) - 1)
    lo = cum[w - 1] if w > 0 else 0.0
    width = probs[w]
    return w, float(np.clip((u - lo) / width, 0.0, np.nextafter(1.0, 0.0))) if width > 0 else 0.0


def _apply(model: PersistentLp, updates) -> None:
    rows, rhs, cols, lower, upper = updates
    model.set_rhs(rows, rhs)
    model.set_col_bounds(cols, lower, upper)


def train(
    graph: PolicyGraph,
    spec: SystemSpec,
    tables: Mapping[str, DegradationTables],
    initial_state,
    iterations: int,
    seed: int = 0,
    theta_min: float = 0.0,
) -> Tuple[CutPool, TrainingLog]:
    return SDDPPolicy(graph, spec, tables, theta_min).train(initial_state, iterations, seed)
