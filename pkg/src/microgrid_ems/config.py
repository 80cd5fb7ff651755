"""Named test systems, optimization methods and the YAML configuration file."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import yaml

from .degradation import REFERENCE_DOD_FADE, REFERENCE_SOC_FADE, BatteryAging, DodFade, SocFade
from .scenario import StageLayout
from .system import GeneratorSpec, LoadSpec, StorageSpec, SystemSpec, ValidationError, VresSpec, validate_system

DIESEL_COST = 0.1  # EUR/kWh
SHED_COST = 5.0  # EUR/kWh

# diesel kW, battery kWh, hydrogen kWh (None: no hydrogen store)
CASES = {1: (25.0, 500.0, 3300.0), 2: (75.0, 500.0, 3300.0), 3: (25.0, 1000.0, None)}


@dataclass(frozen=True)
class Method:
    name: str
    forecast: str  # "perfect", "deterministic" or "stochastic"
    dod_flag: bool
    soc_flag: bool


METHODS = {
    "a": Method("a", "perfect", True, True),
    "b": Method("b", "deterministic", False, False),
    "c": Method("c", "stochastic", False, False),
    "d": Method("d", "stochastic", True, False),
    "e": Method("e", "stochastic", False, True),
    "f": Method("f", "stochastic", True, True),
}


def battery(capacity: float, aging: Optional[BatteryAging] = None) -> StorageSpec:
    return StorageSpec(
        name="battery", soc_min=0.0, soc_max=capacity, p_charge_max=500.0, p_discharge_max=500.0,
        eta_c=0.96, eta_d=0.96, replacement_cost_per_kwh=100.0, degradation=aging or BatteryAging(),
    )


def hydrogen(capacity: float) -> StorageSpec:
    return StorageSpec(
        name="hydrogen", soc_min=0.0, soc_max=capacity, p_charge_max=55.0, p_discharge_max=100.0,
        eta_c=0.64, eta_d=0.5,
    )


def case_system(case: int, aging: Optional[BatteryAging] = None) -> SystemSpec:
    if case not in CASES:
        raise ValidationError([f"case: unknown case {case!r} (choose 1, 2 or 3)"])
    diesel, batt, h2 = CASES[case]
    storages = [battery(batt, aging)]
    if h2 is not None:
        storages.append(hydrogen(h2))
    return validate_system(SystemSpec(
        generators=[GeneratorSpec("diesel", diesel, DIESEL_COST)],
        vres=[VresSpec("wind", 135.0), VresSpec("pv", 86.0)],
        loads=[LoadSpec("demand", SHED_COST)],
        storages=storages,
    ))


@dataclass
class SimulationConfig:
    system: SystemSpec
    method: Method
    layout: StageLayout = field(default_factory=StageLayout)
    iterations: int = 50
    seed: int = 0
    start: int = 0  # first simulated hour, index into the observations
    hours: Optional[int] = None  # simulated hours; None runs to the end of the data
    initial_soc_fraction: float = 0.5
    theta_min: float = 0.0
    history_days: int = 30  # window of daily means behind the cyclic node
    series: Dict[str, str] = field(default_factory=dict)  # component name -> data variable
    case: Optional[int] = None

    def validate(self) -> "SimulationConfig":
        validate_system(self.system)
        self.layout.validate()
        errors = []
        if self.iterations < 1:
            errors.append(f"iterations: must be positive ({self.iterations})")
        if not 0.0 <= self.initial_soc_fraction <= 1.0:
            errors.append(f"initial_soc_fraction: outside [0, 1] ({self.initial_soc_fraction})")
        if self.hours is not None and self.hours < 1:
            errors.append(f"hours: must be positive ({self.hours})")
        if self.start < 0:
            errors.append(f"start: must be nonnegative ({self.start})")
        if errors:
            raise ValidationError(errors)
        return self


# --- YAML --------------------------------------------------------------------------


def _aging(raw: Optional[Mapping[str, Any]]) -> Optional[BatteryAging]:
    if raw is None:
        return None
    raw = dict(raw)
    return BatteryAging(
        dod=DodFade(float(raw.pop("k_delta", REFERENCE_DOD_FADE.k_delta))),
        soc=SocFade(
            float(raw.pop("k_sigma1", REFERENCE_SOC_FADE.k_sigma1)),
            float(raw.pop("k_sigma2", REFERENCE_SOC_FADE.k_sigma2)),
        ),
        **{k: int(v) for k, v in raw.items()},
    )


def _build(cls, raw: Mapping[str, Any], where: str):
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ValidationError([f"{where}: {exc}"]) from None


def system_from_dict(raw: Mapping[str, Any]) -> SystemSpec:
    """Explicit component lists, or ``case: <n>`` for a named system."""
    if "case" in raw and not any(k in raw for k in ("generators", "vres", "loads", "storages")):
        return case_system(int(raw["case"]), _aging(raw.get("battery_degradation")))
    storages = []
    for i, s in enumerate(raw.get("storages", [])):
        s = dict(s)
        try:
            aging = _aging(s.pop("degradation", None))
        except TypeError as exc:
            raise ValidationError([f"storages[{i}].degradation: {exc}"]) from None
        storages.append(_build(StorageSpec, {**s, "degradation": aging}, f"storages[{i}]"))
    return validate_system(SystemSpec(
        generators=[_build(GeneratorSpec, g, f"generators[{i}]") for i, g in enumerate(raw.get("generators", []))],
        vres=[_build(VresSpec, r, f"vres[{i}]") for i, r in enumerate(raw.get("vres", []))],
        loads=[_build(LoadSpec, d, f"loads[{i}]") for i, d in enumerate(raw.get("loads", []))],
        storages=storages,
    ))


def read_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except yaml.YAMLError as exc:
        raise ValidationError([f"{path}: not valid YAML ({exc})"]) from None
    if not isinstance(raw, dict):
        raise ValidationError([f"{path}: expected a mapping at the top level"])
    return raw


def config_from_dict(raw: Mapping[str, Any], method: Optional[str] = None) -> SimulationConfig:
    name = method or raw.get("method", "f")
    if name not in METHODS:
        raise ValidationError([f"method: unknown method {name!r} (choose a to f)"])
    layout = _build(StageLayout, raw.get("layout", {}), "layout")
    keys = ("iterations", "seed", "start", "hours", "initial_soc_fraction", "theta_min", "history_days")
    extra = {k: raw[k] for k in keys if k in raw}
    return SimulationConfig(
        system=system_from_dict(raw), method=METHODS[name], layout=layout,
        series=dict(raw.get("series", {})), case=raw.get("case"), **extra,
    ).validate()


def load_config(path: Union[str, Path], method: Optional[str] = None) -> SimulationConfig:
    return config_from_dict(read_yaml(path), method)


def data_options(raw: Mapping[str, Any]) -> Dict[str, Any]:
    """Keyword arguments for reading observations: wind scale and column mapping."""
    out: Dict[str, Any] = {"wind_scale": float(raw.get("wind_scale", 1.0))}
    if "columns" in raw:
        out["columns"] = dict(raw["columns"])
    return out
