"""Microgrid component definitions and validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .degradation import BatteryAging


class ValidationError(ValueError):
    """Raised when inputs violate a documented invariant.

    ``errors`` holds every violation found, not only the first one.
    """

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class GeneratorSpec:
    name: str
    p_max: float  # kW
    marginal_cost: float  # EUR/kWh


@dataclass(frozen=True)
class VresSpec:
    name: str
    capacity: float  # kW, availability series must stay below this


@dataclass(frozen=True)
class LoadSpec:
    name: str
    shed_cost: float  # EUR/kWh


@dataclass(frozen=True)
class StorageSpec:
    name: str
    soc_min: float  # kWh
    soc_max: float  # kWh
    p_charge_max: float  # kW
    p_discharge_max: float  # kW
    eta_c: float
    eta_d: float
    replacement_cost_per_kwh: float = 0.0
    degradation: Optional[BatteryAging] = None

    @property
    def usable(self) -> float:
        return self.soc_max - self.soc_min

    @property
    def replacement_cost_total(self) -> float:
        return self.replacement_cost_per_kwh * self.soc_max


@dataclass(frozen=True)
class SystemSpec:
    generators: tuple = ()
    vres: tuple = ()
    loads: tuple = ()
    storages: tuple = ()

    def __post_init__(self):
        # lists are accepted for convenience but stored as tuples so the system is hashable and immutable
        for name in ("generators", "vres", "loads", "storages"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def storage(self, name: str) -> StorageSpec:
        for s in self.storages:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def degrading_storages(self) -> List[StorageSpec]:
        return [s for s in self.storages if s.degradation is not None]


def validate_system(spec: SystemSpec) -> SystemSpec:
    """Check every component invariant and return ``spec`` unchanged.

    Raises
    ------
    ValidationError
        Listing every violation as ``"<element>.<field>: <problem>"``.
    """
    errors: List[str] = []
    seen: Dict[str, int] = {}
    for element in (*spec.generators, *spec.vres, *spec.loads, *spec.storages):
        seen[element.name] = seen.get(element.name, 0) + 1
    for name, count in seen.items():
        if count > 1:
            errors.append(f"{name}: duplicate name ({count} elements)")
    if not spec.loads:
        errors.append("system.loads: at least one load is required")

    def nonneg(element, attr):
        value = getattr(element, attr)
        if not np.isfinite(value) or value < 0:
            errors.append(f"{element.name}.{attr}: negative limit ({value})")

    for g in spec.generators:
        nonneg(g, "p_max")
        nonneg(g, "marginal_cost")
    for r in spec.vres:
        nonneg(r, "capacity")
    for d in spec.loads:
        nonneg(d, "shed_cost")
    for s in spec.storages:
        for attr in ("soc_min", "p_charge_max", "p_discharge_max", "replacement_cost_per_kwh"):
            nonneg(s, attr)
        if not s.soc_min < s.soc_max:
            errors.append(f"{s.name}.soc_min: soc_min must be below soc_max ({s.soc_min} >= {s.soc_max})")
        for attr in ("eta_c", "eta_d"):
            eta = getattr(s, attr)
            if not 0.0 < eta <= 1.0:
                errors.append(f"{s.name}.{attr}: efficiency out of range (0, 1] ({eta})")
    if errors:
        raise ValidationError(errors)
    return spec


@dataclass
class StateVector:
    """Per-storage energy held in each depth-of-discharge segment (kWh)."""

    segments: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.segments = {k: np.asarray(v, dtype=float).copy() for k, v in self.segments.items()}

    def total(self, name: str) -> float:
        return float(self.segments[name].sum())

    def as_array(self, order: Sequence[str]) -> np.ndarray:
        if not order:
            return np.zeros(0)
        return np.concatenate([self.segments[name] for name in order])

    @classmethod
    def from_array(cls, values: np.ndarray, sizes: Mapping[str, int]) -> "StateVector":
        out, i = {}, 0
        for name, n in sizes.items():
            out[name] = np.asarray(values[i:i + n], dtype=float)
            i += n
        return cls(out)

    def copy(self) -> "StateVector":
        return StateVector(self.segments)

    def __eq__(self, other) -> bool:
        if not isinstance(other, StateVector) or self.segments.keys() != other.segments.keys():
            return False
        return all(np.array_equal(self.segments[k], other.segments[k]) for k in self.segments)


@dataclass
class StageRealization:
    """One outcome of the stage uncertainty: hourly VRES availability and demand."""

    vres: Dict[str, np.ndarray]
    demand: Dict[str, np.ndarray]
    probability: float = 1.0

    def __post_init__(self):
        self.vres = {k: np.asarray(v, dtype=float) for k, v in self.vres.items()}
        self.demand = {k: np.asarray(v, dtype=float) for k, v in self.demand.items()}

    @property
    def hours(self) -> int:
        for series in (*self.vres.values(), *self.demand.values()):
            return len(series)
        return 0

    def net_production(self) -> float:
        return float(sum(v.sum() for v in self.vres.values()) - sum(d.sum() for d in self.demand.values()))

    def slice(self, start: int, stop: int) -> "StageRealization":
        return StageRealization(
            {k: v[start:stop] for k, v in self.vres.items()},
            {k: v[start:stop] for k, v in self.demand.items()},
            self.probability,
        )

    def check(self, spec: SystemSpec, hours: int) -> None:
        errors = []
        for r in spec.vres:
            series = self.vres.get(r.name)
            if series is None:
                errors.append(f"{r.name}: missing availability series")
                continue
            if len(series) != hours:
                errors.append(f"{r.name}: dimension mismatch ({len(series)} values for {hours} hours)")
            elif np.any(series < 0) or np.any(series > r.capacity + 1e-9):
                errors.append(f"{r.name}: availability outside [0, {r.capacity}]")
        for d in spec.loads:
            series = self.demand.get(d.name)
            if series is None:
                errors.append(f"{d.name}: missing demand series")
                continue
            if len(series) != hours:
                errors.append(f"{d.name}: dimension mismatch ({len(series)} values for {hours} hours)")
            elif np.any(series < 0):
                errors.append(f"{d.name}: negative demand")
        if not 0.0 <= self.probability <= 1.0:
            errors.append(f"realization.probability: outside [0, 1] ({self.probability})")
        if errors:
            raise ValidationError(errors)
