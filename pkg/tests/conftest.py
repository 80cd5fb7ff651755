from __future__ import annotations

import numpy as np
import pytest

from microgrid_ems.degradation import BatteryAging, make_tables
from microgrid_ems.system import GeneratorSpec, LoadSpec, StageRealization, StorageSpec, SystemSpec, VresSpec


def small_system(battery=True, aging=None, diesel=25.0, shed_cost=5.0, soc_max=100.0, k=2):
    storages = []
    if battery:
        storages.append(StorageSpec(
            "battery", 0.0, soc_max, 50.0, 50.0, 0.96, 0.96, 100.0,
            aging if aging is not None else BatteryAging(dod_segments=k),
        ))
    return SystemSpec(
        generators=[GeneratorSpec("diesel", diesel, 0.1)],
        vres=[VresSpec("wind", 100.0)],
        loads=[LoadSpec("demand", shed_cost)],
        storages=storages,
    )


def realization(wind, demand, p=1.0):
    return StageRealization({"wind": np.atleast_1d(np.asarray(wind, float))}, {"demand": np.atleast_1d(np.asarray(demand, float))}, p)


def tables_for(spec):
    return {s.name: make_tables(s) for s in spec.degrading_storages}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
