"""Scenario configuration: parsing, defaults and load-time validity checks."""

from __future__ import annotations

import copy
import enum
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from ..core import (AircraftState, ConfigError, ContingencyKind, ContingencyTable, REPORT_FIELDS,
                    ReportLimits, heading_from_compass)
from ..dynamics import AirframeModel, LeadScript, trimmed
from ..epm import TripLimits
from ..mission import POLICIES, RejoinSpec
from ..rta import BarrierGains, GeofenceSpec, RtaFault, RtaModel, collision_terms, fence_terms
from ..selector import PilotModel, PilotPolicy
from ..ssc import SscConfig


class FaultKind(enum.Enum):
    LEAD_REPORT_DROPOUT = "LeadReportDropout"
    FIELD_CORRUPTION = "FieldCorruption"
    STALE_TIMESTAMP = "StaleTimestamp"
    GPS_NOISE = "GpsNoise"
    W2_DROPOUT = "W2Dropout"
    RTA_FORCED_FAULT = "RtaForcedFault"


_DEFAULT_TARGET = {
    FaultKind.LEAD_REPORT_DROPOUT: "lead_report",
    FaultKind.FIELD_CORRUPTION: "lead_report",
    FaultKind.STALE_TIMESTAMP: "lead_report",
    FaultKind.GPS_NOISE: "lead_report",
    FaultKind.W2_DROPOUT: "W2",
    FaultKind.RTA_FORCED_FAULT: "W2",
}


@dataclass(frozen=True)
class FaultEvent:
    t_start: float
    t_end: float
    kind: FaultKind
    field: str | None = None          # FieldCorruption
    value: Any = None                 # FieldCorruption
    sigma_ft: float = 0.0             # GpsNoise
    rta_fault: RtaFault = RtaFault.INFEASIBLE   # RtaForcedFault
    target: str = ""

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_end

    def problems(self, duration: float) -> list[str]:
        out = []
        if not (self.t_start < self.t_end <= duration + 1e-9):
            out.append(f"fault {self.kind.value}: need t_start < t_end <= duration "
                       f"(got {self.t_start}, {self.t_end}, duration {duration})")
        if self.kind is FaultKind.FIELD_CORRUPTION and self.field not in REPORT_FIELDS:
            out.append(f"fault FieldCorruption: unknown report field {self.field!r}")
        if self.kind is FaultKind.GPS_NOISE and not self.sigma_ft > 0:
            out.append("fault GpsNoise: sigma_ft must be positive")
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "FaultEvent":
        try:
            kind = FaultKind(d["kind"])
        except (KeyError, ValueError):
            raise ConfigError(f"bad fault kind in {dict(d)!r}") from None
        value = d.get("value")
        if isinstance(value, list):
            value = tuple(float(v) for v in value)
        elif isinstance(value, str) and value.lower() in ("nan", "inf", "-inf"):
            value = float(value)
        return cls(
            t_start=float(d.get("t_start_s", 0.0)), t_end=float(d.get("t_end_s", 0.0)), kind=kind,
            field=d.get("field"), value=value, sigma_ft=float(d.get("sigma_ft", 0.0)),
            rta_fault=RtaFault(d.get("rta_fault", "Infeasible")),
            target=d.get("target", _DEFAULT_TARGET[kind]),
        )


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    dt: float
    duration: float
    seed: int
    lead0: AircraftState
    wing0: AircraftState
    lead_script: LeadScript
    airframe: AirframeModel
    geofence: GeofenceSpec
    rho_c: float
    rho_c_inflation: float = 0.10
    gains: BarrierGains = BarrierGains()
    collision_enabled: bool = True
    geofence_enabled: bool = True
    rta_model: RtaModel = RtaModel()
    enforce_frame_budget: bool = False
    frame_budget_fraction: float = 0.5
    max_input_age_s: float = 2.0
    ssc: SscConfig = SscConfig()
    trip_limits: TripLimits = field(default_factory=TripLimits)
    rejoin: RejoinSpec = RejoinSpec()
    policy: str = "scripted_rejoin"
    pilot: PilotModel = PilotModel()
    faults: tuple[FaultEvent, ...] = ()
    contingencies: ContingencyTable = field(default_factory=ContingencyTable.default)
    report_limits: ReportLimits = ReportLimits()
    staleness_frames: int = 5
    pilot_takeovers: tuple[tuple[float, float], ...] = ()
    geofence_changes: tuple[tuple[float, GeofenceSpec], ...] = ()
    fence_margin_ft: float = 500.0
    hard_tolerance_ft: float = 1.0
    raw: Mapping = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_frames(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def rho_c_filter(self) -> float:
        return self.rho_c * (1.0 + self.rho_c_inflation)

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_initial(self, lead0: AircraftState, wing0: AircraftState, seed: int | None = None) -> "ScenarioConfig":
        raw = copy.deepcopy(dict(self.raw))
        raw["lead"] = state_to_dict(lead0)
        raw["wing"] = state_to_dict(wing0)
        if seed is not None:
            raw["seed"] = seed
        return replace(self, lead0=lead0, wing0=wing0, seed=self.seed if seed is None else seed, raw=raw)


def state_from_dict(d: Mapping) -> AircraftState:
    if "psi_deg" in d:
        psi = float(d["psi_deg"])
    elif "heading_deg" in d:
        psi = heading_from_compass(float(d["heading_deg"]))
    else:
        raise ConfigError("initial state needs psi_deg or heading_deg")
    s = AircraftState.level(float(d["E_ft"]), float(d["N_ft"]), float(d["U_ft"]), psi,
                            float(d["v_true_kt"]))
    return trimmed(replace(s, phi=float(d.get("phi_deg", 0.0))))


def state_to_dict(s: AircraftState) -> dict:
    return {"E_ft": s.E, "N_ft": s.N, "U_ft": s.U, "psi_deg": s.psi, "phi_deg": s.phi,
            "v_true_kt": s.v_true}


def _get(d: Mapping, key: str, default, problems: list, cast=float):
    try:
        return cast(d.get(key, default))
    except (TypeError, ValueError):
        problems.append(f"{key}: cannot interpret {d.get(key)!r}")
        return cast(default)


def _section(build, d, problems, default, label: str = ""):
    pre = f"{label}: " if label else ""
    try:
        return build(d)
    except ConfigError as exc:
        problems.extend(pre + p for p in exc.problems)
    except KeyError as exc:
        problems.append(f"{pre}missing key {exc.args[0]!r}")
    except (TypeError, ValueError) as exc:
        problems.append(pre + str(exc))
    return default


TOP_KEYS = frozenset({
    "name", "dt_s", "duration_s", "seed", "lead", "wing", "airframe", "lead_script", "geofence",
    "rta", "ssc", "trip_limits", "rejoin", "report_limits", "contingency_table", "policy", "pilot",
    "faults", "pilot_takeovers", "geofence_changes", "staleness_frames", "fence_margin_ft",
    "hard_tolerance_ft",
})
RTA_KEYS = frozenset({
    "rho_c_ft", "rho_c_inflation", "gamma_collision_per_s", "gamma_geofence_per_s",
    "collision_enabled", "geofence_enabled", "enforce_frame_budget", "frame_budget_fraction",
    "rta_max_input_age_s",
})
PILOT_KEYS = frozenset({"policy", "reaction_delay_frames", "loose_factor", "racetrack_leg_s",
                        "racetrack_bank_deg"})


def _unknown(d, known, prefix: str, problems: list) -> None:
    if isinstance(d, Mapping):
        problems.extend(f"unknown key {prefix}{k}" for k in sorted(set(d) - known))


def parse_scenario(data: Mapping, *, name: str = "scenario") -> ScenarioConfig:
    """Build and validate a config; every violated invariant is reported together."""
    problems: list[str] = []
    raw = copy.deepcopy(dict(data))
    _unknown(data, TOP_KEYS, "", problems)
    _unknown(data.get("rta", {}), RTA_KEYS, "rta.", problems)
    _unknown(data.get("pilot", {}), PILOT_KEYS, "pilot.", problems)

    dt = _get(data, "dt_s", 0.02, problems)
    duration = _get(data, "duration_s", 60.0, problems)
    seed = _get(data, "seed", 0, problems, int)
    if not dt > 0:
        problems.append("dt_s must be positive")
    if not duration > 0:
        problems.append("duration_s must be positive")
    elif dt > 0 and abs(duration / dt - round(duration / dt)) > 1e-6:
        problems.append("duration_s must be a whole number of frames")

    lead0 = _section(state_from_dict, data.get("lead", {}), problems, None, "lead")
    wing0 = _section(state_from_dict, data.get("wing", {}), problems, None, "wing")
    airframe = _section(AirframeModel.from_dict, data.get("airframe", {}), problems, AirframeModel())
    script = _section(LeadScript.from_list, data.get("lead_script", []), problems, LeadScript())
    problems.extend(script.check(airframe))

    fence_d = data.get("geofence")
    geofence = None
    if fence_d is None:
        problems.append("geofence is required")
    else:
        geofence = _section(GeofenceSpec.from_dict, fence_d, problems, None)

    rta_d = data.get("rta", {})
    rho_c = _get(rta_d, "rho_c_ft", 500.0, problems)
    if not rho_c > 0:
        problems.append("rta.rho_c_ft must be positive")
    inflation = _get(rta_d, "rho_c_inflation", 0.10, problems)
    if not inflation >= 0:
        problems.append("rta.rho_c_inflation must be non-negative")
    gains = _section(lambda d: BarrierGains(float(d.get("gamma_collision_per_s", 1.0)),
                                            float(d.get("gamma_geofence_per_s", 1.0))),
                     rta_d, problems, BarrierGains())
    rta_model = RtaModel.for_airframe(airframe.speed_range[1], airframe.max_climb_rate)
    budget_fraction = _get(rta_d, "frame_budget_fraction", 0.5, problems)
    if not 0 < budget_fraction <= 1:
        problems.append("rta.frame_budget_fraction must be in (0, 1]")

    ssc = _section(SscConfig.from_dict, data.get("ssc", {}), problems, SscConfig())
    trip = _section(TripLimits.from_dict, data.get("trip_limits", {}), problems, TripLimits())
    rejoin = _section(RejoinSpec.from_dict, data.get("rejoin", {}), problems, RejoinSpec())
    limits = _section(ReportLimits.from_dict, data.get("report_limits", {}), problems, ReportLimits())
    table = _section(ContingencyTable.from_dict, data.get("contingency_table", {}), problems,
                     ContingencyTable.default())

    policy = data.get("policy", "scripted_rejoin")
    if policy not in POLICIES:
        problems.append(f"unknown policy {policy!r}; known: {sorted(POLICIES)}")

    def _pilot(d):
        return PilotModel(policy=PilotPolicy(d.get("policy", "HoldFormationLoose")),
                          reaction_delay=int(d.get("reaction_delay_frames", 25)),
                          loose_factor=float(d.get("loose_factor", 2.0)),
                          racetrack_leg_s=float(d.get("racetrack_leg_s", 60.0)),
                          racetrack_bank=float(d.get("racetrack_bank_deg", 30.0)))
    pilot = _section(_pilot, data.get("pilot", {}), problems, PilotModel())

    faults = []
    for fd in data.get("faults", []):
        ev = _section(FaultEvent.from_dict, fd, problems, None)
        if ev is not None:
            problems.extend(ev.problems(duration))
            faults.append(ev)

    takeovers = []
    for td in data.get("pilot_takeovers", []):
        t0, t1 = float(td["t_start_s"]), float(td["t_end_s"])
        if not 0 <= t0 < t1 <= duration + 1e-9:
            problems.append(f"pilot takeover window ({t0}, {t1}) must satisfy 0 <= start < end <= duration")
        takeovers.append((t0, t1))

    changes = []
    for gd in data.get("geofence_changes", []):
        t = float(gd["t_s"])
        spec = _section(GeofenceSpec.from_dict, gd.get("geofence", {}), problems, None)
        # the change must land while the pilot holds control (plus the pilot's reaction)
        settle = (pilot.reaction_delay + 1) * dt
        if not any(t0 + settle <= t < t1 for t0, t1 in takeovers):
            problems.append(f"geofence change at t={t:g} s would occur while the source is "
                            "NNCS_RTA; changes are allowed only inside a pilot takeover window")
        if spec is not None:
            changes.append((t, spec))

    staleness = _get(data, "staleness_frames", 5, problems, int)
    if staleness < 1:
        problems.append("staleness_frames must be at least 1")
    margin = _get(data, "fence_margin_ft", 500.0, problems)
    max_age = _get(rta_d, "rta_max_input_age_s", 2.0, problems)

    # initial-state validity
    if lead0 is not None and wing0 is not None:
        lo, hi = airframe.speed_range
        for label, s in (("lead", lead0), ("wing", wing0)):
            if not lo <= s.v_true <= hi:
                problems.append(f"initial {label} speed {s.v_true} kt outside airframe range {airframe.speed_range}")
        h, _, _ = collision_terms(np.array([lead0.position]), np.zeros((1, 3)),
                                  np.array([wing0.position]), rho_c * (1.0 + inflation))
        if not h[0] >= 0:
            problems.append(
                f"initial state violates the collision constraint: separation "
                f"{h[0] + rho_c * (1 + inflation):.1f} ft < rho_c {rho_c * (1 + inflation):.1f} ft")
        if geofence is not None:
            hf, _ = fence_terms(geofence, np.array([wing0.position]))
            if not hf.min() >= margin:
                problems.append(f"initial wingman must lie inside the geofence with margin {margin:g} ft "
                                f"(fence h = {hf.min():.1f} ft)")
    if geofence is not None:
        for kind, plan in table.items():
            if plan.kind is ContingencyKind.FLY_TO_POINT and plan.target_ft is not None:
                hf, _ = fence_terms(geofence, np.array([plan.target_ft], dtype=float))
                if not hf.min() >= 0:
                    problems.append(f"FlyToPoint target for {kind.value} lies outside the geofence")

    if problems:
        raise ConfigError(problems)
    return ScenarioConfig(
        name=data.get("name", name), dt=dt, duration=duration, seed=seed,
        lead0=lead0, wing0=wing0, lead_script=script, airframe=airframe, geofence=geofence,
        rho_c=rho_c, rho_c_inflation=inflation, gains=gains,
        collision_enabled=bool(rta_d.get("collision_enabled", True)),
        geofence_enabled=bool(rta_d.get("geofence_enabled", True)),
        rta_model=rta_model,
        enforce_frame_budget=bool(rta_d.get("enforce_frame_budget", False)),
        frame_budget_fraction=budget_fraction, max_input_age_s=max_age,
        ssc=ssc, trip_limits=trip, rejoin=rejoin, policy=policy, pilot=pilot,
        faults=tuple(faults), contingencies=table, report_limits=limits,
        staleness_frames=staleness, pilot_takeovers=tuple(takeovers),
        geofence_changes=tuple(sorted(changes, key=lambda c: c[0])),
        fence_margin_ft=margin, hard_tolerance_ft=_get(data, "hard_tolerance_ft", 1.0, problems),
        raw=raw,
    )


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_scenario(data, name=path.stem)


def with_seed(cfg: ScenarioConfig, seed: int) -> ScenarioConfig:
    raw = dict(cfg.raw)
    raw["seed"] = seed
    return replace(cfg, seed=seed, raw=raw)


def bundled_scenarios() -> dict[str, Path]:
    """Scenario files shipped with the package, by name."""
    from importlib.resources import files
    root = Path(str(files("formation_rta") / "scenarios"))
    return {p.stem: p for p in sorted(root.glob("*.json"))}
