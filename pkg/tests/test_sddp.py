from __future__ import annotations

import numpy as np
import pytest

from conftest import realization, small_system, tables_for
from oracles import extensive_form, policy_expected_cost, random_toy
from microgrid_ems.lp import SolveError, solve
from microgrid_ems.sddp import Cut, CutPool, PolicyGraph, SDDPPolicy, StageNode, train
from microgrid_ems.subproblem import build_stage_subproblem
from microgrid_ems.system import StateVector, ValidationError


def two_stage_toy():
    """One generator, one load, one battery; two equiprobable demands in stage 2."""
    spec = small_system(k=2, diesel=10.0)
    tables = tables_for(spec)
    nodes = [
        StageNode(2, [realization([60.0, 40.0], [20.0, 20.0])], True, True),
        StageNode(2, [realization([0.0, 0.0], [30.0, 30.0], 0.5), realization([0.0, 0.0], [10.0, 10.0], 0.5)], True, True),
    ]
    return spec, tables, PolicyGraph(nodes, cyclic=False), np.array([10.0, 0.0])


def cyclic_graph(discount=0.7):
    spec = small_system(k=2)
    tables = tables_for(spec)
    nodes = [
        StageNode(2, [realization([30.0, 0.0], [20.0, 25.0], 0.5), realization([0.0, 50.0], [20.0, 30.0], 0.5)], True, True),
        StageNode(3, [realization([80.0, 0.0, 0.0], [20.0, 40.0, 60.0], 0.3),
                      realization([0.0, 10.0, 90.0], [30.0, 30.0, 30.0], 0.7)], True, True),
    ]
    return spec, tables, PolicyGraph(nodes, discount=discount, cyclic=True), np.array([20.0, 10.0])


def test_two_stage_toy_matches_extensive_form():
    spec, tables, graph, x0 = two_stage_toy()
    exact = extensive_form(spec, tables, graph, x0, True, True)
    _, log = train(graph, spec, tables, x0, 30, seed=1)
    assert log.lower_bound[-1] == pytest.approx(exact, rel=1e-6)


def test_single_stage_exact_after_first_iteration():
    spec = small_system(k=3)
    tables = tables_for(spec)
    r = realization([10.0, 70.0, 0.0], [40.0, 20.0, 45.0])
    graph = PolicyGraph([StageNode(3, [r], True, True)], cyclic=False)
    x0 = np.array([10.0, 5.0, 0.0])
    policy = SDDPPolicy(graph, spec, tables)
    policy.train(x0, 1)
    lp = build_stage_subproblem(spec, tables, 3, 1.0, r, True, True, incoming_state=StateVector({"battery": x0}))
    assert policy.log.lower_bound[0] == pytest.approx(solve(lp).objective, rel=1e-9)
    assert policy.log.lower_bound[0] == pytest.approx(extensive_form(spec, tables, graph, x0, True, True), rel=1e-6)


def test_deterministic_graph_ignores_seed():
    spec = small_system(k=2)
    tables = tables_for(spec)
    nodes = [StageNode(2, [realization([50.0, 0.0], [20.0, 40.0])], True, True) for _ in range(3)]
    graph = PolicyGraph(nodes, cyclic=False)
    bounds = [train(graph, spec, tables, np.array([5.0, 5.0]), 5, seed=s)[1].lower_bound for s in (0, 1, 99)]
    assert bounds[0] == bounds[1] == bounds[2]


def test_same_seed_same_cuts():
    spec, tables, graph, x0 = cyclic_graph()
    a, la = train(graph, spec, tables, x0, 8, seed=3)
    b, lb = train(graph, spec, tables, x0, 8, seed=3)
    assert la.lower_bound == lb.lower_bound and la.sampled_cost == lb.sampled_cost
    for ca, cb in zip(a.cuts, b.cuts):
        assert [(c.alpha, c.beta.tolist()) for c in ca] == [(c.alpha, c.beta.tolist()) for c in cb]


def test_empty_pool_is_myopic():
    spec, tables, graph, x0 = cyclic_graph()
    policy = SDDPPolicy(graph, spec, tables)
    sol = policy.solve_scenario(0, x0, 0)
    assert sol.future_cost_estimate == 0.0
    assert sol.objective == pytest.approx(sol.immediate_cost)


def test_hand_cut_bounds_theta():
    spec, tables, graph, x0 = cyclic_graph()
    policy = SDDPPolicy(graph, spec, tables)
    cut = Cut(50.0, np.array([-0.2, -0.3]))
    policy.add_cut(0, cut)
    sol = policy.solve_scenario(0, x0, 1)
    x_out = policy.state_array(sol.outgoing_state)
    assert sol.future_cost_estimate == pytest.approx(max(0.0, cut(x_out)), abs=1e-7)
    assert sol.objective == pytest.approx(sol.immediate_cost + sol.future_cost_estimate, rel=1e-9)
    # evaluation model sees the same cut
    again = policy.evaluate_stage(0, x0, graph.nodes[0].scenarios[1])
    assert again.objective == pytest.approx(sol.objective, rel=1e-9)


def test_single_realization_cut_is_tight_at_trial_point():
    spec = small_system(k=2)
    tables = tables_for(spec)
    nodes = [StageNode(1, [realization([90.0], [10.0])], True, True), StageNode(2, [realization([0.0, 0.0], [40.0, 30.0])], True, True)]
    policy = SDDPPolicy(PolicyGraph(nodes, cyclic=False), spec, tables)
    x0 = np.array([30.0, 30.0])
    trajectory = policy.forward_pass(x0, np.random.default_rng(0))
    added = policy.backward_pass(trajectory)
    assert len(added) == 1 and added[0][0] == 0
    x1 = trajectory[1].incoming
    cut = added[0][1]
    assert cut(x1) == pytest.approx(policy.solve_scenario(1, x1, 0).objective, rel=1e-9)


def test_zero_discount_gives_zero_self_cuts():
    spec, tables, graph, x0 = cyclic_graph(discount=0.0)
    policy = SDDPPolicy(graph, spec, tables)
    policy.train(x0, 3)
    for cut in policy.pool.cuts[1]:
        assert cut.alpha == 0.0 and np.all(cut.beta == 0.0)


def test_cuts_underestimate_exact_cost_to_go():
    rng = np.random.default_rng(5)
    spec, tables, graph, x0 = random_toy(rng)
    policy = SDDPPolicy(graph, spec, tables)
    policy.train(x0, 15, seed=2)
    rest = PolicyGraph(graph.nodes[1:], cyclic=False)
    width = spec.storages[0].usable / tables["battery"].n_dod
    for _ in range(5):
        x = rng.uniform(0, width, len(x0))
        exact = extensive_form(spec, tables, rest, x, True, True)
        assert policy.pool.value(0, x) <= exact + 1e-6 * max(1.0, exact)


def test_cyclic_theta_bounded_by_discounted_worst_case():
    spec, tables, graph, x0 = cyclic_graph()
    policy = SDDPPolicy(graph, spec, tables)
    policy.train(x0, 20, seed=4)
    tab = tables["battery"]
    s = spec.storages[0]
    worst_rate = tab.dod_costs.max() * s.p_discharge_max + tab.soc_cost_rate(np.array([0.0, s.soc_max])).max()
    node = graph.nodes[-1]
    worst = max(
        r.demand["demand"].sum() * spec.loads[0].shed_cost
        + node.hours * (spec.generators[0].p_max * spec.generators[0].marginal_cost + worst_rate)
        for r in node.scenarios
    )
    gamma = graph.discount
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.uniform(0, s.usable / 2, 2)
        assert policy.pool.value(1, x) <= gamma * worst / (1 - gamma) + 1e-6


def test_lower_bound_nondecreasing_on_cyclic_graph():
    spec, tables, graph, x0 = cyclic_graph()
    _, log = train(graph, spec, tables, x0, 25, seed=8)
    lb = np.array(log.lower_bound)
    assert np.all(np.diff(lb) >= -1e-6 * np.maximum(1.0, np.abs(lb[1:])))
    assert len(log.sampled_cost) == len(log.wall_time) == 25


def test_acyclic_policy_cost_above_bound():
    spec, tables, graph, x0 = two_stage_toy()
    policy = SDDPPolicy(graph, spec, tables)
    policy.train(x0, 3, seed=0)
    assert policy_expected_cost(policy, x0) >= policy.log.lower_bound[-1] - 1e-7


def test_load_pool_validation():
    spec, tables, graph, x0 = cyclic_graph()
    policy = SDDPPolicy(graph, spec, tables)
    with pytest.raises(ValidationError, match="nodes"):
        policy.load_pool(CutPool([[]]))
    with pytest.raises(ValidationError, match="slope"):
        policy.load_pool(CutPool([[Cut(1.0, np.zeros(3))], []]))
    policy.load_pool(CutPool([[Cut(1.0, np.zeros(2))], []]))
    assert len(policy.pool) == 1


def test_graph_validation():
    r = realization([1.0], [1.0], 0.4)
    with pytest.raises(ValidationError, match="sum to"):
        PolicyGraph([StageNode(1, [r])]).validate()
    with pytest.raises(ValidationError, match="covers"):
        PolicyGraph([StageNode(2, [realization([1.0], [1.0])])]).validate()
    with pytest.raises(ValidationError, match="discount"):
        PolicyGraph([StageNode(1, [realization([1.0], [1.0])])], discount=1.0).validate()


def test_infeasible_state_reports_node():
    spec, tables, graph, _ = cyclic_graph()
    policy = SDDPPolicy(graph, spec, tables)
    with pytest.raises(SolveError, match="node 0"):
        policy.solve_scenario(0, np.array([1e6, 1e6]), 0)


def test_nested_inverse_cdf_draws_paths_by_probability():
    """A fine uniform grid of points maps onto paths in proportion to their probability."""
    from microgrid_ems.sddp import _inverse_cdf

    probs = [np.array([0.3, 0.7]), np.array([0.466, 0.257, 0.277]), np.array([0.53, 0.47])]
    counts = {}
    grid = (np.arange(20000) + 0.5) / 20000
    for u in grid:
        path = []
        for p in probs:
            w, u = _inverse_cdf(p, u)
            path.append(w)
        counts[tuple(path)] = counts.get(tuple(path), 0) + 1
    assert len(counts) == 12
    for path, n in counts.items():
        expected = np.prod([p[w] for p, w in zip(probs, path)])
        assert n / len(grid) == pytest.approx(expected, abs=1e-4)


def test_training_visits_every_path_of_a_small_tree():
    spec, tables, graph, x0 = cyclic_graph()
    graph = PolicyGraph(graph.nodes, cyclic=False)
    policy = SDDPPolicy(graph, spec, tables)
    seen = set()
    original = policy.forward_pass

    def record(*args, **kwargs):
        out = original(*args, **kwargs)
        seen.add(tuple(s.scenario for s in out))
        return out

    policy.forward_pass = record
    policy.train(x0, 12, seed=0)
    assert seen == {(a, b) for a in range(2) for b in range(2)}
