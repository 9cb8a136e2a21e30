"""Domain types, unit conventions and lead position-report checks.

Frame convention
----------------
Positions are East-North-Up in feet.  The heading angle ``psi`` stored on
every state is measured in degrees *counterclockwise from East*, which is the
frame the rejoin-point geometry is written in (a heading of 0 points East, 90
points North).  :func:`heading_vector` is the single conversion used by the
dynamics, the rejoin geometry and the aspect-angle computation.  Use
:func:`compass_heading` / :func:`heading_from_compass` to move between this
angle and a clockwise-from-North compass heading.

Bank angle is positive right-wing-down, so a positive bank turns the aircraft
clockwise (compass heading increases, ``psi`` decreases).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, Sequence

KT_TO_FPS = 1.68781
G_FPS2 = 32.174

#: Coordinated-turn constants: R = v^2 / (K1 tan phi), psi_dot = K2 tan phi / v (knots, feet, degrees).
TURN_K1 = 11.26
TURN_K2 = 1091.0


def wrap_360(angle_deg: float) -> float:
    a = math.fmod(angle_deg, 360.0)
    if a < 0.0:
        a += 360.0
    # fmod(-1e-18, 360) + 360 rounds to 360.0
    return 0.0 if a >= 360.0 else a


def wrap_180(angle_deg: float) -> float:
    """Wrap to (-180, 180]."""
    a = wrap_360(angle_deg)
    return a - 360.0 if a > 180.0 else a


def heading_vector(psi_deg: float) -> tuple[float, float]:
    """Unit (E, N) direction of heading angle ``psi_deg``."""
    r = math.radians(psi_deg)
    return math.cos(r), math.sin(r)


def compass_heading(psi_deg: float) -> float:
    """Clockwise-from-North heading for a frame angle."""
    return wrap_360(90.0 - psi_deg)


def heading_from_compass(compass_deg: float) -> float:
    return wrap_360(90.0 - compass_deg)


@dataclass(frozen=True)
class EnvelopeState:
    alpha_aoa: float = 0.0
    beta: float = 0.0
    Nz: float = 1.0
    Ny: float = 0.0
    Vc: float = 0.0
    phi_rate: float = 0.0
    de: float = 0.0
    da: float = 0.0
    dr: float = 0.0
    de_rate: float = 0.0
    da_rate: float = 0.0
    dr_rate: float = 0.0


@dataclass(frozen=True)
class AircraftState:
    """Kinematic and envelope state of one aircraft.

    Units: t [s]; E, N, U [ft]; psi, phi [deg]; v_true [kt]; vE, vN, vU [ft/s].
    """

    t: float
    E: float
    N: float
    U: float
    psi: float
    phi: float
    v_true: float
    vE: float = 0.0
    vN: float = 0.0
    vU: float = 0.0
    env: EnvelopeState = field(default_factory=EnvelopeState)

    @classmethod
    def level(cls, E: float, N: float, U: float, psi: float, v_true: float,
              phi: float = 0.0, t: float = 0.0) -> "AircraftState":
        """Build a state whose inertial velocity matches (v_true, psi)."""
        cE, cN = heading_vector(psi)
        v = v_true * KT_TO_FPS
        return cls(t=t, E=E, N=N, U=U, psi=wrap_360(psi), phi=phi, v_true=v_true,
                   vE=v * cE, vN=v * cN, vU=0.0,
                   env=EnvelopeState(Nz=1.0 / math.cos(math.radians(phi)), Vc=v_true))

    @property
    def position(self) -> tuple[float, float, float]:
        return (self.E, self.N, self.U)

    @property
    def velocity(self) -> tuple[float, float, float]:
        return (self.vE, self.vN, self.vU)


class RollMode(enum.Enum):
    BANK = "bank"
    TURN_RATE = "turn_rate"


@dataclass(frozen=True)
class ControlCommand:
    """Pitch/roll/speed/yaw command carried on W1/W2/W3/W5.

    pitch_cmd is a climb rate [ft/s]; roll_cmd is a bank angle [deg] or a
    turn rate [deg/s] depending on ``roll_mode``; speed_cmd [kt]; yaw_cmd is
    passed through untouched.
    """

    pitch_cmd: float
    roll_cmd: float
    speed_cmd: float
    yaw_cmd: float = 0.0
    roll_mode: RollMode = RollMode.BANK

    def is_finite(self) -> bool:
        return all(math.isfinite(x) for x in (self.pitch_cmd, self.roll_cmd,
                                               self.speed_cmd, self.yaw_cmd))


# --------------------------------------------------------------------------
# Position reports (Level-1 signal 5)

REPORT_FIELDS = (
    "timestamp", "test_point_id", "position", "orientation", "orientation_rates",
    "tas", "cas", "velocities", "accelerations", "normal_accel",
    "fuel_remaining", "pla", "wind",
)


@dataclass(frozen=True)
class PositionReport:
    timestamp: float
    test_point_id: str
    position: tuple[float, float, float]
    orientation: tuple[float, float, float]          # (phi, theta, psi) deg
    orientation_rates: tuple[float, float, float]    # deg/s
    tas: float
    cas: float
    velocities: tuple[float, float, float]           # ft/s
    accelerations: tuple[float, float, float]        # ft/s^2
    normal_accel: float                              # g
    fuel_remaining: float                            # lb
    pla: float                                       # percent
    wind: tuple[float, float] = (0.0, 0.0)           # ft/s
    # Sender-set validity markers; a field absent from the mapping is marked valid.
    invalid_flags: Mapping[str, str] = field(default_factory=dict)

    def flag(self, name: str) -> str | None:
        return self.invalid_flags.get(name)

    def with_field(self, name: str, value) -> "PositionReport":
        if name not in REPORT_FIELDS:
            raise KeyError(f"unknown report field {name!r}")
        if isinstance(value, list):
            value = tuple(value)
        return replace(self, **{name: value})


def report_from_state(state: AircraftState, *, test_point_id: str = "TP-01",
                      fuel_remaining: float = 5000.0, prev: AircraftState | None = None,
                      dt: float | None = None) -> PositionReport:
    """Sender-side report for ``state``; accelerations from ``prev`` when given."""
    vh = math.hypot(state.vE, state.vN)
    theta = math.degrees(math.atan2(state.vU, vh)) if vh > 0 else 0.0
    if prev is not None and dt:
        acc = ((state.vE - prev.vE) / dt, (state.vN - prev.vN) / dt, (state.vU - prev.vU) / dt)
        psi_rate = wrap_180(state.psi - prev.psi) / dt
    else:
        acc = (0.0, 0.0, 0.0)
        psi_rate = 0.0
    return PositionReport(
        timestamp=state.t,
        test_point_id=test_point_id,
        position=(state.E, state.N, state.U),
        orientation=(state.phi, theta, state.psi),
        orientation_rates=(state.env.phi_rate, 0.0, psi_rate),
        tas=state.v_true,
        cas=state.env.Vc,
        velocities=(state.vE, state.vN, state.vU),
        accelerations=acc,
        normal_accel=state.env.Nz,
        fuel_remaining=fuel_remaining,
        pla=min(130.0, max(0.0, 60.0 + (state.v_true - 300.0) / 5.0)),
        wind=(0.0, 0.0),
    )


@dataclass(frozen=True)
class ReportLimits:
    max_speed_kt: float = 600.0
    max_accel_g: float = 10.0
    max_normal_accel_g: float = 10.0
    max_orientation_rate_dps: float = 120.0
    altitude_band_ft: tuple[float, float] = (0.0, 60000.0)
    pla_range: tuple[float, float] = (0.0, 130.0)
    max_wind_fps: float = 300.0
    # |rate| above this with an unchanged orientation marks the orientation stale
    stale_rate_dps: float = 0.5

    @classmethod
    def from_dict(cls, d: Mapping) -> "ReportLimits":
        return cls(**field_kwargs(cls, d, "report_limits"))


@dataclass(frozen=True)
class FieldVerdict:
    valid: bool
    reason: str = ""


class ValidationFailureKind(enum.Enum):
    LEAD_REPORT_DROPOUT = "LeadReportDropout"
    NON_MONOTONIC_TIMESTAMP = "NonMonotonicTimestamp"
    INVALID_LEAD_POSITION = "InvalidLeadPosition"
    INVALID_ORIENTATION = "InvalidOrientation"
    STALE_ORIENTATION = "StaleOrientation"
    INVALID_VELOCITY = "InvalidVelocity"
    INVALID_AUXILIARY = "InvalidAuxiliary"


@dataclass(frozen=True)
class ValidationResult:
    verdicts: Mapping[str, FieldVerdict]
    valid: bool

    def invalid_fields(self) -> list[str]:
        return [k for k, v in self.verdicts.items() if not v.valid]

    @property
    def usable(self) -> bool:
        """True when everything needed to navigate on the report is valid."""
        return all(self.verdicts[k].valid for k in _NAV_FIELDS)

    def failure_kind(self) -> ValidationFailureKind | None:
        bad = set(self.invalid_fields())
        if not bad:
            return None
        if not self.verdicts["timestamp"].valid:
            return ValidationFailureKind.NON_MONOTONIC_TIMESTAMP
        if "position" in bad:
            return ValidationFailureKind.INVALID_LEAD_POSITION
        if "orientation" in bad:
            if self.verdicts["orientation"].reason == "stale orientation":
                return ValidationFailureKind.STALE_ORIENTATION
            return ValidationFailureKind.INVALID_ORIENTATION
        if bad & {"velocities", "tas"}:
            return ValidationFailureKind.INVALID_VELOCITY
        return ValidationFailureKind.INVALID_AUXILIARY


_NAV_FIELDS = ("timestamp", "position", "orientation", "velocities", "tas")


def _finite(value) -> bool:
    if isinstance(value, str):
        return True
    if isinstance(value, (tuple, list)):
        return all(_finite(v) for v in value)
    try:
        return math.isfinite(float(value))
    except (TypeError, ValueError):
        return False


def _bounds_problem(name: str, value, limits: ReportLimits) -> str | None:
    if name in ("tas", "cas"):
        if not 0.0 <= value <= limits.max_speed_kt:
            return f"{name} {value:g} kt outside [0, {limits.max_speed_kt:g}]"
    elif name == "position":
        lo, hi = limits.altitude_band_ft
        if not lo <= value[2] <= hi:
            return f"altitude {value[2]:g} ft outside [{lo:g}, {hi:g}]"
    elif name == "orientation":
        phi, theta, psi = value
        if not (-180.0 <= phi <= 180.0 and -90.0 <= theta <= 90.0 and 0.0 <= psi < 360.0):
            return "orientation out of range"
    elif name == "orientation_rates":
        if max(abs(r) for r in value) > limits.max_orientation_rate_dps:
            return "orientation rate out of range"
    elif name == "velocities":
        if math.sqrt(sum(v * v for v in value)) > limits.max_speed_kt * KT_TO_FPS:
            return "speed exceeds maximum"
    elif name == "accelerations":
        if math.sqrt(sum(a * a for a in value)) > limits.max_accel_g * G_FPS2:
            return "acceleration exceeds maximum"
    elif name == "normal_accel":
        if abs(value) > limits.max_normal_accel_g:
            return "normal acceleration exceeds maximum"
    elif name == "fuel_remaining":
        if value < 0.0:
            return "negative fuel"
    elif name == "pla":
        lo, hi = limits.pla_range
        if not lo <= value <= hi:
            return f"PLA {value:g} outside [{lo:g}, {hi:g}]"
    elif name == "wind":
        if math.hypot(*value) > limits.max_wind_fps:
            return "wind exceeds maximum"
    return None


def validate_report(report: PositionReport, history: Sequence[PositionReport],
                    limits: ReportLimits) -> ValidationResult:
    """Reasonableness check of a lead position report.

    ``history`` holds previously accepted reports, oldest first.  Every problem
    becomes a verdict; this function does not raise.
    """
    prev = history[-1] if history else None
    try:
        ts = float(report.timestamp)
    except (TypeError, ValueError):
        ts = math.nan
    if prev is not None and not (ts > prev.timestamp):
        bad = FieldVerdict(False, "non-monotonic timestamp")
        return ValidationResult({name: bad for name in REPORT_FIELDS}, False)

    verdicts: dict[str, FieldVerdict] = {}
    for name in REPORT_FIELDS:
        value = getattr(report, name)
        sender = report.flag(name)
        if sender is not None:
            verdicts[name] = FieldVerdict(False, f"sender flag: {sender}")
        elif not _finite(value):
            verdicts[name] = FieldVerdict(False, "non-finite value")
        else:
            problem = None
            try:
                problem = _bounds_problem(name, value, limits)
            except (TypeError, ValueError, IndexError):
                problem = "malformed value"
            verdicts[name] = FieldVerdict(False, problem) if problem else FieldVerdict(True)

    if prev is not None and math.isfinite(ts):
        dt = ts - prev.timestamp
        if verdicts["position"].valid and _finite(prev.position):
            jump = math.dist(report.position, prev.position)
            bound = limits.max_speed_kt * KT_TO_FPS * dt
            if jump > bound:
                verdicts["position"] = FieldVerdict(
                    False, f"position jump {jump:.1f} ft exceeds {bound:.1f} ft")
        if (verdicts["orientation"].valid and verdicts["orientation_rates"].valid
                and tuple(report.orientation) == tuple(prev.orientation)
                and max(abs(r) for r in report.orientation_rates) > limits.stale_rate_dps):
            verdicts["orientation"] = FieldVerdict(False, "stale orientation")

    return ValidationResult(verdicts, all(v.valid for v in verdicts.values()))


# --------------------------------------------------------------------------
# Contingencies

class ContingencyKind(enum.Enum):
    MAINTAIN_CURRENT_PATH = "MaintainCurrentPath"
    LOITER = "Loiter"
    FLY_TO_POINT = "FlyToPoint"
    TERMINATE_TO_PILOT = "TerminateToPilot"


@dataclass(frozen=True)
class ContingencyPlan:
    kind: ContingencyKind
    target_ft: tuple[float, float, float] | None = None   # FlyToPoint
    loiter_radius_ft: float = 3000.0                       # Loiter


class ConfigError(ValueError):
    """Invalid scenario configuration; ``problems`` lists every violation."""

    def __init__(self, problems: Sequence[str] | str):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def field_kwargs(cls, d: Mapping, section: str) -> dict:
    """Dataclass keyword arguments from ``d``; unknown keys raise, lists become tuples."""
    names = [f.name for f in fields(cls)]
    unknown = sorted(set(d) - set(names))
    if unknown:
        raise ConfigError([f"unknown {section} key {k!r}" for k in unknown])
    return {k: tuple(d[k]) if isinstance(d[k], list) else d[k] for k in names if k in d}


DEFAULT_CONTINGENCIES: dict[ValidationFailureKind, ContingencyPlan] = {
    ValidationFailureKind.LEAD_REPORT_DROPOUT: ContingencyPlan(ContingencyKind.MAINTAIN_CURRENT_PATH),
    ValidationFailureKind.NON_MONOTONIC_TIMESTAMP: ContingencyPlan(ContingencyKind.MAINTAIN_CURRENT_PATH),
    ValidationFailureKind.INVALID_LEAD_POSITION: ContingencyPlan(ContingencyKind.TERMINATE_TO_PILOT),
    ValidationFailureKind.INVALID_ORIENTATION: ContingencyPlan(ContingencyKind.LOITER),
    ValidationFailureKind.STALE_ORIENTATION: ContingencyPlan(ContingencyKind.LOITER),
    ValidationFailureKind.INVALID_VELOCITY: ContingencyPlan(ContingencyKind.MAINTAIN_CURRENT_PATH),
    ValidationFailureKind.INVALID_AUXILIARY: ContingencyPlan(ContingencyKind.MAINTAIN_CURRENT_PATH),
}


class ContingencyTable(dict):
    """Mapping failure kind -> plan.  Must cover every :class:`ValidationFailureKind`."""

    @classmethod
    def default(cls) -> "ContingencyTable":
        return cls(DEFAULT_CONTINGENCIES)

    @classmethod
    def from_dict(cls, d: Mapping[str, Mapping]) -> "ContingencyTable":
        table = cls.default()
        problems = []
        for key, spec in d.items():
            try:
                kind = ValidationFailureKind(key)
            except ValueError:
                problems.append(f"unknown failure kind {key!r} in contingency table")
                continue
            try:
                plan_kind = ContingencyKind(spec["plan"])
            except (KeyError, ValueError):
                problems.append(f"bad contingency plan for {key}: {spec!r}")
                continue
            target = spec.get("target_ft")
            table[kind] = ContingencyPlan(
                plan_kind,
                target_ft=tuple(target) if target is not None else None,
                loiter_radius_ft=spec.get("loiter_radius_ft", 3000.0),
            )
        if problems:
            raise ConfigError(problems)
        table.check_complete()
        return table

    def check_complete(self) -> None:
        missing = [k.value for k in ValidationFailureKind if k not in self]
        if missing:
            raise ConfigError([f"contingency table has no plan for {m}" for m in missing])
        for kind, plan in self.items():
            if plan.kind is ContingencyKind.FLY_TO_POINT and plan.target_ft is None:
                raise ConfigError(f"FlyToPoint plan for {kind.value} has no target")


def select_contingency(trigger: ValidationFailureKind, config: Mapping) -> ContingencyPlan:
    return config[trigger]


# --------------------------------------------------------------------------
# Relative geometry

def aisl(lead: AircraftState, wing: AircraftState) -> float:
    """Altitude-independent slant range [ft]."""
    return math.hypot(lead.E - wing.E, lead.N - wing.N)


class UndefinedAngleError(ValueError):
    pass


def aspect_angle(lead: AircraftState, wing: AircraftState) -> float:
    """Signed angle from the lead's tail to the wingman, in (-180, 180].

    Positive when the wingman is on the lead's right (starboard) side.
    """
    dE, dN = wing.E - lead.E, wing.N - lead.N
    if dE == 0.0 and dN == 0.0:
        raise UndefinedAngleError("aspect angle undefined at zero AISL")
    bearing = math.degrees(math.atan2(dN, dE))
    # tail direction is psi + 180; counterclockwise from the tail is starboard
    return wrap_180(bearing - (lead.psi + 180.0))
