from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from microgrid_ems.config import battery
from microgrid_ems.degradation import (
    REFERENCE_DOD_FADE, REFERENCE_SOC_FADE, CalibrationAssumptions, DodFade, SocFade, calibrate, dod_cost_table,
    eval_fade_dod, eval_fade_soc, fill_cheapest, ladder_dod_cost, ladder_step, make_tables, rainflow_cycles,
    rainflow_fade, soc_cost_tables, soc_reference,
)

# termwise evaluation of the segment cost formula with plain floats (500 kWh battery, 100 EUR/kWh)
BATTERY_DOD_TABLE = [0.006441666666666668, 0.019325000000000002, 0.03220833333333333, 0.04509166666666668, 0.057974999999999985]
BATTERY_SOC_UP = [0.0003013934132995914, 0.00035150236244601586, 0.0004099423058138142, 0.00047809833460722825]
BATTERY_SOC_DN = [0.0, 0.0, 0.000770468208083325, 0.0007704682080833247]


def test_dod_fade_values():
    assert eval_fade_dod(REFERENCE_DOD_FADE, 0.0) == 0.0
    assert eval_fade_dod(REFERENCE_DOD_FADE, 0.8) == pytest.approx(1.9789e-4, rel=1e-4)
    assert eval_fade_dod(DodFade(1.0), 1.0) == 1.0
    with pytest.raises(ValueError):
        eval_fade_dod(REFERENCE_DOD_FADE, 1.2)


def test_soc_fade_values():
    f = REFERENCE_SOC_FADE
    assert eval_fade_soc(f, 0.5) == pytest.approx(5.708e-6)
    assert eval_fade_soc(f, 0.0) == pytest.approx(eval_fade_soc(f, 1.0), rel=1e-12)
    assert eval_fade_soc(f, 0.15) == pytest.approx(eval_fade_soc(f, 0.2), rel=1e-12)
    with pytest.raises(ValueError):
        eval_fade_soc(f, -0.01)


def test_soc_fade_continuity():
    f = REFERENCE_SOC_FADE
    for edge in (0.1, 0.2):
        assert f(edge - 1e-12) == pytest.approx(f(edge), rel=1e-9)
    grid = np.linspace(0, 1, 10001)
    assert np.max(np.abs(np.diff(f(grid)))) < 1e-8


def test_dod_table_examples():
    assert dod_cost_table(DodFade(1.0), 1.0, 1.0, 1.0, 2).tolist() == pytest.approx([0.5, 1.5])
    assert np.all(dod_cost_table(DodFade(0.0), 1.0, 1.0, 1.0, 3) == 0)
    table = dod_cost_table(REFERENCE_DOD_FADE, 50000.0, 0.96, 500.0, 5)
    assert table.tolist() == pytest.approx(BATTERY_DOD_TABLE, rel=1e-12)
    with pytest.raises(ValueError):
        dod_cost_table(REFERENCE_DOD_FADE, 1.0, 1.0, 1.0, 0)


@pytest.mark.parametrize("K", [1, 2, 3, 5, 20, 100])
def test_dod_table_telescopes(K):
    table = dod_cost_table(REFERENCE_DOD_FADE, 50000.0, 0.96, 500.0, K)
    assert np.all(np.diff(table) > 0)
    assert (table * 0.96 * 500.0 / K).sum() == pytest.approx(50000.0 * REFERENCE_DOD_FADE(1.0), rel=1e-12)


def test_soc_reference():
    assert soc_reference(REFERENCE_SOC_FADE, 500.0) == pytest.approx(100.0)
    # dense-grid argmin of the fade function itself, upper edge of the plateau
    grid = np.linspace(0, 1, 100001)
    values = eval_fade_soc(REFERENCE_SOC_FADE, grid)
    upper = grid[np.nonzero(values <= values.min() * (1 + 1e-12))[0][-1]]
    assert upper * 500.0 == pytest.approx(100.0, abs=0.01)
    assert soc_reference(lambda s: (np.asarray(s) - 0.5) ** 2, 200.0) == pytest.approx(100.0, abs=1e-3)
    assert soc_reference(REFERENCE_SOC_FADE, 0.0) == 0.0


def test_soc_tables_for_battery():
    up, dn = soc_cost_tables(REFERENCE_SOC_FADE, 50000.0, 500.0, 100.0, 4, 4)
    assert up.tolist() == pytest.approx(BATTERY_SOC_UP, rel=1e-12)
    assert dn.tolist() == pytest.approx(BATTERY_SOC_DN, rel=1e-12, abs=1e-18)


def test_soc_down_table_two_segments():
    f = REFERENCE_SOC_FADE
    _, dn = soc_cost_tables(f, 50000.0, 500.0, 100.0, 4, 2)
    assert dn[0] == pytest.approx(0.0, abs=1e-18)
    assert dn[1] == pytest.approx(50000.0 / 500.0 * 2 * (f(0.0) - f(0.1)), rel=1e-12)


def test_soc_tables_degenerate_cases():
    up, dn = soc_cost_tables(lambda s: np.full_like(np.asarray(s, float), 3.0), 1.0, 1.0, 0.5, 3, 3)
    assert np.all(up == 0) and np.all(dn == 0)
    up, dn = soc_cost_tables(lambda s: (1.0 - np.asarray(s, float)) ** 2, 1.0, 10.0, 10.0, 2, 2)
    assert up.size == 0 and dn.size == 2
    with pytest.raises(ValueError, match="non-monotone"):
        soc_cost_tables(lambda s: np.sin(8 * np.asarray(s)), 1.0, 1.0, 0.0, 4, 4)


def test_make_tables_for_battery():
    tab = make_tables(battery(500.0))
    assert tab.dod_costs.tolist() == pytest.approx(BATTERY_DOD_TABLE)
    assert tab.soc_ref_energy == pytest.approx(100.0)
    assert tab.soc_up_width == pytest.approx(100.0) and tab.soc_dn_width == pytest.approx(25.0)
    assert tab.replacement_cost_total == 50000.0
    for costs in (tab.dod_costs, tab.soc_up_costs, tab.soc_dn_costs):
        assert np.all(np.diff(costs) >= -1e-18) and np.all(costs >= 0)
    assert [r[0] for r in tab.rows()] == ["dod"] * 5 + ["soc_up"] * 4 + ["soc_down"] * 4


def test_soc_cost_rate_matches_split():
    tab = make_tables(battery(500.0))
    levels = np.array([0.0, 50.0, 100.0, 150.0, 500.0])
    up, dn = tab.soc_split(levels)
    assert np.allclose(up @ tab.soc_up_costs + dn @ tab.soc_dn_costs, tab.soc_cost_rate(levels))
    assert tab.soc_cost_rate(100.0)[0] == 0.0
    # the ladder integrates the printed increments: full battery costs R/SOC_max * n * (f(1) - f(ref)) * width
    assert tab.soc_cost_rate(500.0)[0] == pytest.approx(50000.0 / 500.0 * 4 * (REFERENCE_SOC_FADE(1.0) - REFERENCE_SOC_FADE(0.2)) * 100.0)


def test_rainflow_examples():
    f = DodFade(1.0)
    assert rainflow_fade([0.0, 1.0], f) == pytest.approx(0.5)
    assert rainflow_fade([0.3, 0.3, 0.3], f) == 0.0
    # charge then discharge by half: one residual pair of half cycles of depth 0.5
    assert rainflow_fade([0.5, 1.0, 0.5], f) == pytest.approx(0.25)
    assert sorted(rainflow_cycles([0.5, 1.0, 0.5])) == [(0.5, 0.5), (0.5, 0.5)]
    with pytest.raises(ValueError):
        rainflow_fade([0.5], f)
    with pytest.raises(ValueError):
        rainflow_fade([0.5, 1.5], f)


def test_rainflow_known_sequence():
    # standard textbook history: -2 1 -3 5 -1 3 -4 4 -2
    cycles = rainflow_cycles([-2, 1, -3, 5, -1, 3, -4, 4, -2])
    full = sorted(d for d, w in cycles if w == 1.0)
    half = sorted(d for d, w in cycles if w == 0.5)
    assert full == [4.0]
    assert half == [3.0, 4.0, 6.0, 8.0, 8.0, 9.0]


def test_segment_cost_of_discharge_then_recharge():
    """Discharging from full to half and back costs the cycle's fade (depth 0.5)."""
    f = REFERENCE_DOD_FADE
    K = 20
    table = dod_cost_table(f, 50000.0, 0.96, 500.0, K)
    seg = ladder_dod_cost([1.0, 0.5, 1.0], table, 500.0, 0.96)
    assert seg == pytest.approx(50000.0 * rainflow_fade([1.0, 0.5, 1.0], f), rel=1e-12)
    assert seg == pytest.approx(50000.0 * f(0.5), rel=1e-12)


def test_ladder_step_rules():
    state = np.array([5.0, 10.0, 0.0])
    new, ch, dis = ladder_step(state, 10.0, 0.0, 7.0)
    assert new.tolist() == [0.0, 8.0, 0.0] and dis.tolist() == [5.0, 2.0, 0.0]
    new, ch, dis = ladder_step(new, 10.0, 14.0, 0.0)
    assert new.tolist() == [10.0, 10.0, 2.0] and ch.tolist() == [10.0, 2.0, 2.0]
    new, ch, dis = ladder_step(new, 10.0, 3.0, 4.0)
    assert new.tolist() == [9.0, 10.0, 2.0] and ch[0] == 3.0 and dis[0] == 4.0
    with pytest.raises(ValueError):
        ladder_step(np.zeros(2), 1.0, 0.0, 1.0)
    assert fill_cheapest(2.5, 1.0, 4).tolist() == [1.0, 1.0, 0.5, 0.0]


def max_anchored_traces(draw_max, draw_inner):
    return st.tuples(draw_max, st.lists(draw_inner, min_size=1, max_size=30))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 1.0), st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30))
def test_ladder_matches_rainflow_on_full_cycle_traces(top, inner):
    trace = np.concatenate([[top], np.array(inner) * top, [top]])
    f = REFERENCE_DOD_FADE
    costs = {}
    for K in (2, 5, 20):
        table = dod_cost_table(f, 50000.0, 0.96, 500.0, K)
        err = abs(ladder_dod_cost(trace, table, 500.0, 0.96) - 50000.0 * rainflow_fade(trace, f))
        assert err <= 10 * 50000.0 * f.k_delta / K
        costs[K] = err
    assert costs[20] <= costs[2] + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 1.0), st.integers(1, 30))
def test_segment_cost_is_replacement_cost_times_fade_units(depth, K):
    """Cycle of a given depth on the ladder equals R times the interpolated fade, for any K."""
    f = DodFade(2.0e-4)
    table = dod_cost_table(f, 1000.0, 0.9, 10.0, K)
    cost = ladder_dod_cost([1.0, 1.0 - depth, 1.0], table, 10.0, 0.9)
    edges = np.linspace(0, 1, K + 1)
    interp = np.interp(depth, edges, f(edges))
    assert cost == pytest.approx(1000.0 * interp, rel=1e-10)


def test_calibration_reproduces_printed_constants():
    k_delta, k1, k2 = calibrate()
    assert k2 == pytest.approx(math.log(1.85) / 0.8)
    assert abs(k2 - 0.769) / 0.769 < 1e-3
    assert abs(k1 - 5.708e-6) / 5.708e-6 < 1e-3
    # self-consistent cycling coefficient under the stated lifetimes
    assert k_delta == pytest.approx((1 - 10 / 20) / (3000 * 0.64))
    assert calibrate(CalibrationAssumptions(fade_ratio=1.0))[2] == 0.0
    with pytest.raises(ValueError):
        calibrate(CalibrationAssumptions(calendar_years=0.0))
