"""Battery capacity-fade functions and their piecewise-linear cost tables.

Fade is measured in end-of-life units: a cumulative fade of 1.0 means the
battery has to be replaced, so fade multiplied by the replacement cost gives
euros. Two decoupled stress factors are modelled:

* cycling, a convex function of the depth of each discharge cycle, priced per
  kWh discharged from a ladder of equally sized energy segments;
* state of charge, a convex fade *rate* (per hour), priced per kWh-hour spent
  above or below the least-damaging level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

HOURS_PER_YEAR = 8760.0


@dataclass(frozen=True)
class DodFade:
    """Quadratic cycle fade ``k_delta * depth**2``."""

    k_delta: float

    def __call__(self, delta):
        return self.k_delta * np.square(delta)


@dataclass(frozen=True)
class SocFade:
    """Hourly fade as a function of normalized state of charge.

    Exponential on ``[flat_high, 1]``, constant on ``[flat_low, flat_high)`` and
    a straight line on ``[0, flat_low)`` that starts at the fade of a full
    battery, so an empty and a full battery age equally fast.
    """

    k_sigma1: float
    k_sigma2: float
    sigma_ref_exp: float = 0.5
    flat_low: float = 0.1
    flat_high: float = 0.2

    def _exp(self, sigma):
        return self.k_sigma1 * np.exp(self.k_sigma2 * (np.asarray(sigma, dtype=float) - self.sigma_ref_exp))

    def __call__(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        f_full = self._exp(1.0)
        f_flat = self._exp(self.flat_high)
        low = f_full + sigma / self.flat_low * (f_flat - f_full)
        out = np.where(sigma >= self.flat_high, self._exp(sigma), np.where(sigma >= self.flat_low, f_flat, low))
        return out if out.ndim else float(out)

    @property
    def plateau(self) -> Tuple[float, float]:
        """Interval on which the fade rate is minimal."""
        if self.k_sigma2 > 0:
            return (self.flat_low, self.flat_high)
        if self.k_sigma2 == 0:
            return (0.0, 1.0)
        # decreasing exponential: minimum sits at a full battery
        return (1.0, 1.0)


# constants printed for the lithium-ion battery of the reference microgrid
REFERENCE_DOD_FADE = DodFade(k_delta=3.092e-4)
REFERENCE_SOC_FADE = SocFade(k_sigma1=5.708e-6, k_sigma2=0.769)


@dataclass(frozen=True)
class BatteryAging:
    """Fade model of one storage plus the ladder resolution used to price it."""

    dod: DodFade = REFERENCE_DOD_FADE
    soc: SocFade = REFERENCE_SOC_FADE
    dod_segments: int = 5
    soc_up_segments: int = 4
    soc_dn_segments: int = 4


def _check_unit(value, label: str) -> None:
    arr = np.asarray(value, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(~np.isfinite(arr)):
        raise ValueError(f"{label} outside [0, 1]")


def eval_fade_dod(f: DodFade, delta):
    _check_unit(delta, "cycle depth")
    return f(delta)


def eval_fade_soc(f: SocFade, sigma):
    _check_unit(sigma, "state of charge")
    return f(sigma)


def dod_cost_table(f: Callable, R_total: float, eta_d: float, soc_max: float, segments: int) -> np.ndarray:
    """Marginal cycling cost of each segment in EUR per kWh delivered at the terminals.

    Segment ``k`` (0-based) prices the depth interval ``[k/n, (k+1)/n]``; the
    table telescopes so that emptying every segment once costs
    ``R_total * f(1)``.
    """
    if segments < 1:
        raise ValueError("need at least one segment")
    edges = np.linspace(0.0, 1.0, segments + 1)
    fade = np.asarray(f(edges), dtype=float)
    return R_total / (eta_d * soc_max) * segments * np.diff(fade)


def soc_reference(f: Union[SocFade, Callable], soc_max: float, grid: int = 200001) -> float:
    """Energy level (kWh) at which the state-of-charge fade rate is lowest.

    When the minimum is a plateau the upper edge is returned.
    """
    if soc_max <= 0:
        return 0.0
    if isinstance(f, SocFade):
        return f.plateau[1] * soc_max
    sigma = np.linspace(0.0, 1.0, grid)
    values = np.asarray(f(sigma), dtype=float)
    lowest = values.min()
    tol = 1e-12 * max(1.0, abs(lowest))
    return float(sigma[np.nonzero(values <= lowest + tol)[0][-1]]) * soc_max


def soc_cost_tables(
    f: Callable, R_total: float, soc_max: float, soc_ref: float, seg_up: int, seg_dn: int, tol: float = 1e-15
) -> Tuple[np.ndarray, np.ndarray]:
    """Marginal state-of-charge costs above and below the reference level.

    Units are EUR per kWh of distance from the reference, per hour. A side of
    zero width yields an empty table.
    """
    if seg_up < 1 or seg_dn < 1:
        raise ValueError("need at least one segment per direction")
    if not 0.0 <= soc_ref <= soc_max:
        raise ValueError("reference level outside [0, soc_max]")
    sigma_ref = soc_ref / soc_max
    scale = R_total / soc_max

    up = np.zeros(0)
    if sigma_ref < 1.0:
        edges = sigma_ref + np.arange(seg_up + 1) / seg_up * (1.0 - sigma_ref)
        up = scale * seg_up * np.diff(np.asarray(f(edges), dtype=float))
    dn = np.zeros(0)
    if sigma_ref > 0.0:
        edges = sigma_ref - np.arange(seg_dn + 1) / seg_dn * sigma_ref
        dn = scale * seg_dn * np.diff(np.asarray(f(edges), dtype=float))
    for label, table in (("up", up), ("down", dn)):
        if table.size and (np.any(np.diff(table) < -tol * max(1.0, abs(table).max())) or table[0] < -tol * max(1.0, abs(table).max())):
            raise ValueError(f"non-monotone {label} table: fade function is not convex on that side of the reference")
    return up, dn


@dataclass(frozen=True)
class DegradationTables:
    dod_costs: np.ndarray  # EUR/kWh discharged
    dod_width: float  # kWh per segment
    soc_ref_energy: float  # kWh
    soc_up_costs: np.ndarray  # EUR/(kWh h)
    soc_up_width: float
    soc_dn_costs: np.ndarray
    soc_dn_width: float
    replacement_cost_total: float
    soc_min: float = 0.0

    @property
    def n_dod(self) -> int:
        return len(self.dod_costs)

    def soc_cost_rate(self, soc):
        """Cheapest-ladder SOC cost rate (EUR/h) at absolute energy ``soc``."""
        soc = np.atleast_1d(np.asarray(soc, dtype=float))
        out = np.zeros_like(soc)
        for costs, width, distance in (
            (self.soc_up_costs, self.soc_up_width, soc - self.soc_ref_energy),
            (self.soc_dn_costs, self.soc_dn_width, self.soc_ref_energy - soc),
        ):
            if not len(costs):
                continue
            remaining = np.maximum(distance, 0.0)
            for c in costs:
                used = np.minimum(remaining, width)
                out += c * used
                remaining = remaining - used
        return out

    def soc_split(self, soc) -> Tuple[np.ndarray, np.ndarray]:
        """Fill the up/down segments cheapest first for each energy in ``soc``."""
        soc = np.atleast_1d(np.asarray(soc, dtype=float))
        parts = []
        for costs, width, distance in (
            (self.soc_up_costs, self.soc_up_width, soc - self.soc_ref_energy),
            (self.soc_dn_costs, self.soc_dn_width, self.soc_ref_energy - soc),
        ):
            remaining = np.maximum(distance, 0.0)
            seg = np.zeros((len(soc), len(costs)))
            for k in range(len(costs)):
                seg[:, k] = np.minimum(remaining, width)
                remaining = remaining - seg[:, k]
            parts.append(seg)
        return parts[0], parts[1]

    def rows(self) -> List[Tuple[str, int, float, float]]:
        out = [("dod", k + 1, self.dod_width, float(c)) for k, c in enumerate(self.dod_costs)]
        out += [("soc_up", k + 1, self.soc_up_width, float(c)) for k, c in enumerate(self.soc_up_costs)]
        out += [("soc_down", k + 1, self.soc_dn_width, float(c)) for k, c in enumerate(self.soc_dn_costs)]
        return out


def make_tables(storage) -> DegradationTables:
    """Build the cost tables of a storage that carries a :class:`BatteryAging` model."""
    aging = storage.degradation
    if aging is None:
        raise ValueError(f"{storage.name} has no degradation model")
    R = storage.replacement_cost_total
    dod = dod_cost_table(aging.dod, R, storage.eta_d, storage.soc_max, aging.dod_segments)
    ref = soc_reference(aging.soc, storage.soc_max)
    ref = min(max(ref, storage.soc_min), storage.soc_max)
    up, dn = soc_cost_tables(aging.soc, R, storage.soc_max, ref, aging.soc_up_segments, aging.soc_dn_segments)
    return DegradationTables(
        dod_costs=dod,
        dod_width=storage.usable / aging.dod_segments,
        soc_ref_energy=ref,
        soc_up_costs=up,
        soc_up_width=(storage.soc_max - ref) / aging.soc_up_segments,
        soc_dn_costs=dn,
        soc_dn_width=ref / aging.soc_dn_segments,
        replacement_cost_total=R,
        soc_min=storage.soc_min,
    )


# --- cheapest-segment-first ladder -------------------------------------------------


def fill_cheapest(energy: float, width: float, segments: int) -> np.ndarray:
    """Place ``energy`` into the cheapest segments first."""
    out = np.zeros(segments)
    remaining = energy
    for k in range(segments):
        out[k] = min(max(remaining, 0.0), width)
        remaining -= out[k]
    return out


def ladder_step(state: np.ndarray, width: float, charge: float, discharge: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distribute one step's stored/withdrawn energy over the segment ladder.

    ``charge`` and ``discharge`` are energy changes of the stored content
    (after efficiency). Withdrawals come from the cheapest non-empty segment
    and deposits go to the cheapest non-full one; energy that is charged and
    discharged within the same step passes through the cheapest segment. This
    is the cost-minimal allocation for a convex ladder.

    Returns ``(new_state, charged_per_segment, discharged_per_segment)``.
    """
    s = np.array(state, dtype=float)
    ch = np.zeros_like(s)
    dis = np.zeros_like(s)
    through = min(charge, discharge)
    ch[0] += through
    dis[0] += through
    rem_c = charge - through
    rem_d = discharge - through
    for k in range(len(s)):
        if rem_d <= 0:
            break
        take = min(s[k], rem_d)
        s[k] -= take
        dis[k] += take
        rem_d -= take
    for k in range(len(s)):
        if rem_c <= 0:
            break
        put = min(width - s[k], rem_c)
        s[k] += put
        ch[k] += put
        rem_c -= put
    if rem_d > 1e-7 * max(1.0, width) or rem_c > 1e-7 * max(1.0, width):
        raise ValueError("flow exceeds the storage content or capacity")
    return s, ch, dis


def ladder_dod_cost(trace: Sequence[float], dod_costs: np.ndarray, soc_max: float, eta_d: float = 1.0) -> float:
    """Cycling cost of a normalized SOC trace under cheapest-segment-first dispatch.

    The initial content sits in the cheapest segments.
    """
    trace = np.asarray(trace, dtype=float)
    _check_unit(trace, "state of charge")
    n = len(dod_costs)
    width = soc_max / n
    state = fill_cheapest(trace[0] * soc_max, width, n)
    cost = 0.0
    for delta in np.diff(trace) * soc_max:
        state, _, dis = ladder_step(state, width, max(delta, 0.0), max(-delta, 0.0))
        # withdrawn content times eta_d is the energy delivered at the terminals
        cost += float(dod_costs @ dis) * eta_d
    return cost


# --- rainflow ------------------------------------------------------------------------


def _reversals(x: np.ndarray) -> List[float]:
    pts = [float(v) for v in x]
    out = [pts[0]]
    for v in pts[1:]:
        if v == out[-1]:
            continue
        if len(out) >= 2 and (out[-1] - out[-2]) * (v - out[-1]) > 0:
            out[-1] = v
        else:
            out.append(v)
    return out


def rainflow_cycles(trace: Iterable[float]) -> List[Tuple[float, float]]:
    """Three-point rainflow count returning ``(depth, weight)`` pairs.

    Full cycles carry weight 1, residual half cycles weight 0.5.
    """
    stack: List[float] = []
    out: List[Tuple[float, float]] = []
    for point in _reversals(np.asarray(list(trace), dtype=float)):
        stack.append(point)
        while len(stack) >= 3:
            x = abs(stack[-1] - stack[-2])
            y = abs(stack[-2] - stack[-3])
            if x < y:
                break
            if len(stack) == 3:
                out.append((y, 0.5))
                stack.pop(0)
            else:
                out.append((y, 1.0))
                last = stack.pop()
                del stack[-2:]
                stack.append(last)
    out.extend((abs(b - a), 0.5) for a, b in zip(stack, stack[1:]))
    return out


def rainflow_fade(trace: Sequence[float], f: Callable) -> float:
    trace = np.asarray(trace, dtype=float)
    if len(trace) < 2:
        raise ValueError("trace needs at least two points")
    _check_unit(trace, "state of charge")
    return float(sum(w * f(depth) for depth, w in rainflow_cycles(trace)))


# --- calibration ---------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationAssumptions:
    fade_ratio: float = 1.85  # fade at high SOC relative to low SOC on the exponential
    ratio_span: float = 0.8  # distance between those two SOC levels
    calendar_years: float = 20.0  # end of life without cycling at the reference SOC
    cycle_count: float = 3000.0
    cycle_depth: float = 0.8
    cycle_years: float = 10.0  # end of life when cycling
    eol_fade: float = 1.0


def calibrate(a: CalibrationAssumptions = CalibrationAssumptions()) -> Tuple[float, float, float]:
    """Return ``(k_delta, k_sigma1, k_sigma2)`` consistent with the assumptions.

    The cycle-life scenario is assumed to run at the reference SOC, so its
    calendar part is ``cycle_years / calendar_years`` of the budget.
    """
    for name in ("fade_ratio", "ratio_span", "calendar_years", "cycle_count", "cycle_depth", "cycle_years", "eol_fade"):
        if getattr(a, name) <= 0:
            raise ValueError(f"{name} must be positive")
    k_sigma2 = math.log(a.fade_ratio) / a.ratio_span
    k_sigma1 = a.eol_fade / (a.calendar_years * HOURS_PER_YEAR)
    calendar = a.cycle_years * HOURS_PER_YEAR * k_sigma1
    k_delta = (a.eol_fade - calendar) / (a.cycle_count * a.cycle_depth ** 2)
    if k_delta <= 0:
        raise ValueError("calendar fade alone exhausts the budget within the cycle life")
    return k_delta, k_sigma1, k_sigma2
