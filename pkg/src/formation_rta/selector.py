"""Control selector, velocity-to-airframe command mapping and the scripted safety pilot."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import KT_TO_FPS, AircraftState, ControlCommand, wrap_180
from .dynamics import AirframeModel
from .epm import EpmStatus, Source
from .mission import RejoinSpec, rejoin_point
from .rta import FilterResult

HEADING_GAIN = 0.5   # 1/s, heading error -> commanded heading rate


def map_velocity_to_command(u_safe, state: AircraftState, model: AirframeModel) -> ControlCommand:
    """Convert a wingman velocity [ft/s] into bank / speed / climb-rate commands."""
    uE, uN, uU = (float(x) for x in u_safe)
    v_lo, v_hi = model.speed_range
    pitch = min(max(uU, -model.max_climb_rate), model.max_climb_rate)
    vh = math.hypot(uE, uN)
    if vh < 1e-9:
        return ControlCommand(pitch, 0.0, v_lo)
    speed = min(max(vh / KT_TO_FPS, v_lo), v_hi)
    err = wrap_180(math.degrees(math.atan2(uN, uE)) - state.psi)
    psi_rate = HEADING_GAIN * err
    v = max(state.v_true, v_lo)
    # psi_dot = -k2 tan(phi) / v  (positive bank turns clockwise)
    bank = -math.degrees(math.atan(psi_rate * v / model.turn_constant_k2))
    bank = min(max(bank, -model.max_bank), model.max_bank)
    return ControlCommand(pitch, bank, speed)


@dataclass(frozen=True)
class SelectorState:
    source: Source = Source.PILOT
    last_w2: FilterResult | None = None
    alert_w14: bool = False


def select(w2: FilterResult | None, w5: ControlCommand, epm: EpmStatus, state: SelectorState,
           *, wing: AircraftState, model: AirframeModel) -> tuple[ControlCommand, SelectorState]:
    """Merge the filtered (W2) and pilot (W5) commands into W3; every fault resolves to PILOT."""
    healthy = w2 is not None and w2.healthy
    if epm.selected_source is Source.PILOT or epm.faulted or not healthy:
        source = Source.PILOT
        w3 = w5
    else:
        source = Source.NNCS_RTA
        w3 = map_velocity_to_command(w2.u_safe, wing, model)
    return w3, SelectorState(source=source, last_w2=w2, alert_w14=w2 is None)


# --------------------------------------------------------------------------
# Scripted safety pilot

class PilotPolicy(enum.Enum):
    HOLD_FORMATION_LOOSE = "HoldFormationLoose"
    FLY_RACETRACK = "FlyRacetrack"
    EXECUTE_CONTINGENCY = "ExecuteContingency"


@dataclass(frozen=True)
class PilotModel:
    policy: PilotPolicy = PilotPolicy.HOLD_FORMATION_LOOSE
    reaction_delay: int = 25          # frames
    loose_factor: float = 2.0         # loose trail range as a multiple of rho_r
    racetrack_leg_s: float = 60.0
    racetrack_bank: float = 30.0

    def __post_init__(self):
        if self.reaction_delay < 0:
            raise ValueError("reaction_delay must be non-negative")


def racetrack_command(pilot: PilotModel, wing: AircraftState, model: AirframeModel) -> ControlCommand:
    """Straight legs joined by constant-bank 180 deg turns, phased on the clock."""
    omega = model.turn_constant_k2 * math.tan(math.radians(pilot.racetrack_bank)) / wing.v_true
    turn_s = 180.0 / omega
    period = 2.0 * (pilot.racetrack_leg_s + turn_s)
    phase = math.fmod(wing.t, period)
    leg = pilot.racetrack_leg_s
    turning = leg <= phase < leg + turn_s or 2 * leg + turn_s <= phase
    return ControlCommand(0.0, pilot.racetrack_bank if turning else 0.0, wing.v_true)


def pilot_velocity_loose(pilot: PilotModel, wing: AircraftState, lead: AircraftState,
                         theta_AA: float, rho_r: float) -> np.ndarray:
    loose = RejoinSpec(theta_AA=theta_AA, rho_r=pilot.loose_factor * rho_r, rho_e=1.0, t_success=1.0)
    point = np.array(rejoin_point(lead, loose))
    return np.array(lead.velocity) + 0.05 * (point - np.array(wing.position))
