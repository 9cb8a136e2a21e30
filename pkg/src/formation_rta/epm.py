"""Envelope protection monitor: latched switch to pilot control."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

from .core import AircraftState, ConfigError


class Source(enum.Enum):
    NNCS_RTA = "NNCS_RTA"
    PILOT = "PILOT"


# Fixed check order; trip_reason names the first violating variable.
MONITORED = ("alpha_aoa", "beta", "Nz", "Ny", "Vc", "phi", "phi_rate",
             "de", "da", "dr", "de_rate", "da_rate", "dr_rate")

DEFAULT_LIMITS = {
    "alpha_aoa": (-5.0, 20.0),
    "beta": (-10.0, 10.0),
    "Nz": (-1.0, 4.0),
    "Ny": (-1.0, 1.0),
    "Vc": (120.0, 450.0),
    "phi": (-75.0, 75.0),
    "phi_rate": (-60.0, 60.0),
    "de": (-25.0, 25.0),
    "da": (-20.0, 20.0),
    "dr": (-30.0, 30.0),
    "de_rate": (-60.0, 60.0),
    "da_rate": (-80.0, 80.0),
    "dr_rate": (-60.0, 60.0),
}


@dataclass(frozen=True)
class TripLimits:
    limits: Mapping[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_LIMITS))
    hysteresis: float = 0.02    # fraction of each range kept clear before re-engage

    def __post_init__(self):
        problems = []
        for name in MONITORED:
            if name not in self.limits:
                problems.append(f"trip limit missing for {name}")
                continue
            lo, hi = self.limits[name]
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                problems.append(f"trip limit for {name} must be finite with min < max")
        if not 0 <= self.hysteresis < 0.5:
            problems.append("hysteresis must be in [0, 0.5)")
        if problems:
            raise ConfigError(problems)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TripLimits":
        limits = dict(DEFAULT_LIMITS)
        for k, v in d.get("limits", {}).items():
            if k not in DEFAULT_LIMITS:
                raise ConfigError(f"unknown EPM variable {k!r}")
            limits[k] = tuple(v)
        return cls(limits, d.get("hysteresis", 0.02))


def monitored_values(state: AircraftState) -> dict[str, float]:
    env = state.env
    vals = {name: getattr(env, name) for name in MONITORED if name != "phi"}
    vals["phi"] = state.phi
    return {name: vals[name] for name in MONITORED}


@dataclass(frozen=True)
class EpmStatus:
    engaged: bool = True
    tripped: bool = False
    faulted: bool = False
    trip_reason: tuple | str | None = None
    selected_source: Source = Source.NNCS_RTA
    refusal: str | None = None


def _first_violation(state: AircraftState, limits: TripLimits, shrink: float = 0.0):
    for name, value in monitored_values(state).items():
        lo, hi = limits.limits[name]
        margin = shrink * (hi - lo)
        if value < lo + margin:
            return name, value, lo
        if value > hi - margin:
            return name, value, hi
    return None


def check(state: AircraftState, limits: TripLimits, pilot_takeover: bool = False,
          prev: EpmStatus | None = None) -> EpmStatus:
    """Evaluate the trip conditions; a trip latches across calls via ``prev``."""
    prev = prev or EpmStatus()
    values = monitored_values(state)
    bad = [k for k, v in values.items() if not math.isfinite(v)]
    if bad:
        return EpmStatus(engaged=prev.engaged, tripped=True, faulted=True,
                         trip_reason=prev.trip_reason or f"monitor fault: {bad[0]} non-finite",
                         selected_source=Source.PILOT)
    if prev.tripped:
        return replace(prev, refusal=None)
    violation = _first_violation(state, limits)
    if violation is not None:
        return EpmStatus(engaged=prev.engaged, tripped=True, trip_reason=violation,
                         selected_source=Source.PILOT)
    if pilot_takeover:
        return EpmStatus(engaged=prev.engaged, tripped=True, trip_reason="pilot command",
                         selected_source=Source.PILOT)
    return EpmStatus(engaged=prev.engaged)


def reengage(status: EpmStatus, state: AircraftState, limits: TripLimits) -> EpmStatus:
    """Test-engineer re-engage: un-latch only if every variable is clear of its limits."""
    if status.faulted:
        return replace(status, refusal="monitor faulted")
    if not status.tripped:
        return status
    values = monitored_values(state)
    if not all(math.isfinite(v) for v in values.values()):
        return replace(status, refusal="non-finite monitored value")
    violation = _first_violation(state, limits, shrink=limits.hysteresis)
    if violation is not None:
        return replace(status, refusal=f"{violation[0]} within hysteresis band")
    return EpmStatus(engaged=True)
