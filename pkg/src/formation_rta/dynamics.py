"""Kinematic airframe propagation and lead turn geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .core import (KT_TO_FPS, TURN_K1, TURN_K2, AircraftState, ControlCommand,
                   EnvelopeState, RollMode, field_kwargs, heading_vector, wrap_180, wrap_360)


@dataclass(frozen=True)
class AirframeModel:
    max_bank: float = 60.0            # deg
    max_bank_rate: float = 30.0       # deg/s
    speed_range: tuple[float, float] = (150.0, 420.0)   # kt
    max_accel: float = 32.0           # ft/s^2
    max_climb_rate: float = 100.0     # ft/s
    turn_constant_k1: float = TURN_K1
    turn_constant_k2: float = TURN_K2

    def __post_init__(self):
        lo, hi = self.speed_range
        if not (0 < lo < hi):
            raise ValueError(f"bad speed range {self.speed_range}")
        for name in ("max_bank", "max_bank_rate", "max_accel", "max_climb_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.max_bank < 90:
            raise ValueError("max_bank must be below 90 deg")

    @classmethod
    def from_dict(cls, d: Mapping) -> "AirframeModel":
        return cls(**field_kwargs(cls, d, "airframe"))


def _clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def _synth_envelope(prev: EnvelopeState, phi: float, phi_rate: float, v: float,
                    dt: float) -> EnvelopeState:
    # Desk-scale stand-in for the monitored surface/air-data variables.
    Nz = 1.0 / math.cos(math.radians(phi))
    alpha = 2.0 * Nz * (300.0 / v) ** 2
    de = -0.5 * alpha
    da = 0.02 * phi_rate
    return EnvelopeState(
        alpha_aoa=alpha, beta=0.0, Nz=Nz, Ny=0.0, Vc=v, phi_rate=phi_rate,
        de=de, da=da, dr=0.0,
        de_rate=(de - prev.de) / dt, da_rate=(da - prev.da) / dt, dr_rate=0.0,
    )


def step(state: AircraftState, cmd: ControlCommand, dt: float,
         model: AirframeModel) -> AircraftState:
    """One explicit-Euler step of coordinated-turn kinematics.

    Bank and speed slew toward the command at the model's rate limits; the
    heading turns at k2*tan(phi)/v deg/s (clockwise for positive bank).
    Position integrates the start-of-step speed and heading.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not cmd.is_finite():
        raise ValueError(f"non-finite command {cmd}")

    v = state.v_true
    if cmd.roll_mode is RollMode.TURN_RATE:
        target_bank = math.degrees(math.atan(cmd.roll_cmd * max(v, 1e-9) / model.turn_constant_k2))
    else:
        target_bank = cmd.roll_cmd
    target_bank = _clamp(target_bank, -model.max_bank, model.max_bank)
    dphi_max = model.max_bank_rate * dt
    phi_new = state.phi + _clamp(target_bank - state.phi, -dphi_max, dphi_max)

    v_lo, v_hi = model.speed_range
    dv_max = model.max_accel / KT_TO_FPS * dt
    v_new = v + _clamp(_clamp(cmd.speed_cmd, v_lo, v_hi) - v, -dv_max, dv_max)

    climb = _clamp(cmd.pitch_cmd, -model.max_climb_rate, model.max_climb_rate)

    psi_rate = -model.turn_constant_k2 * math.tan(math.radians(state.phi)) / v if v > 0 else 0.0
    psi_new = wrap_360(state.psi + psi_rate * dt)

    cE, cN = heading_vector(state.psi)
    ground = v * KT_TO_FPS
    nE, nN = heading_vector(psi_new)
    ground_new = v_new * KT_TO_FPS
    env = _synth_envelope(state.env, phi_new, (phi_new - state.phi) / dt, v_new, dt)
    return AircraftState(
        t=state.t + dt,
        E=state.E + ground * cE * dt,
        N=state.N + ground * cN * dt,
        U=state.U + climb * dt,
        psi=psi_new, phi=phi_new, v_true=v_new,
        vE=ground_new * nE, vN=ground_new * nN, vU=climb,
        env=env,
    )


# --------------------------------------------------------------------------
# Turn geometry (target bank and speed for a rejoin position)

@dataclass(frozen=True)
class TurnGeometry:
    """Lead turn intermediates.

    R_L carries the sign of the bank (negative for a left bank) exactly as the
    target bank/speed computation uses it; |R_L| is the turn radius in feet.
    omega_L is the signed lead turn rate [deg/s]; omega_r = omega_L.
    """

    R_L: float
    omega_L: float
    omega_r: float


def turn_geometry(v_L: float, phi_L: float, k1: float = TURN_K1,
                  k2: float = TURN_K2) -> TurnGeometry:
    if not v_L > 0:
        raise ValueError("lead speed must be positive")
    if phi_L == 0:
        raise ValueError("turn geometry undefined for wings-level flight")
    if abs(phi_L) >= 90.0:
        raise ValueError("bank angle at or beyond 90 deg")
    tan_phi = math.tan(math.radians(phi_L))
    R_L = v_L ** 2 / (k1 * tan_phi)
    omega_L = k2 * tan_phi / v_L
    return TurnGeometry(R_L=R_L, omega_L=omega_L, omega_r=omega_L)


def target_bank_speed(lead: AircraftState, theta_AA: float, rho_r: float,
                      k1: float = TURN_K1, k2: float = TURN_K2) -> tuple[float, float]:
    """Target bank [deg] and speed [kt] for a wingman at (theta_AA, rho_r) off the lead."""
    v_L, phi_L = lead.v_true, lead.phi
    if not v_L > 0:
        raise ValueError("lead speed must be positive")
    if abs(phi_L) >= 90.0:
        raise ValueError("bank angle at or beyond 90 deg")
    if rho_r < 0:
        raise ValueError("rejoin range must be non-negative")
    if phi_L == 0:
        return phi_L, v_L
    geo = turn_geometry(v_L, phi_L, k1, k2)
    s = math.sin(math.radians(theta_AA))
    inside = (phi_L < 0 and theta_AA < 0) or (phi_L > 0 and theta_AA > 0)
    if inside:
        v_r = k1 * geo.omega_L * (geo.R_L - rho_r * s) / k2
    else:
        v_r = k1 * geo.omega_L * (geo.R_L + rho_r * s) / k2
    phi_r = math.degrees(math.atan(v_r * geo.omega_r / k2))
    return phi_r, v_r


# --------------------------------------------------------------------------
# Scripted lead

SEGMENT_KINDS = ("hold", "turn", "speed", "climb")


@dataclass(frozen=True)
class Segment:
    kind: str
    duration_s: float
    bank_deg: float = 0.0
    speed_kt: float | None = None
    climb_fps: float = 0.0
    heading_deg: float | None = None    # hold: frame heading to capture
    altitude_ft: float | None = None    # hold: altitude to capture

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if not self.duration_s > 0:
            raise ValueError("segment duration must be positive")


@dataclass(frozen=True)
class LeadScript:
    segments: tuple[Segment, ...] = field(default_factory=tuple)

    @classmethod
    def from_list(cls, items: Sequence[Mapping]) -> "LeadScript":
        return cls(tuple(Segment(**dict(it)) for it in items))

    def check(self, model: AirframeModel) -> list[str]:
        problems = []
        lo, hi = model.speed_range
        for i, seg in enumerate(self.segments):
            if abs(seg.bank_deg) > model.max_bank:
                problems.append(f"lead segment {i}: bank {seg.bank_deg} exceeds {model.max_bank}")
            if seg.speed_kt is not None and not lo <= seg.speed_kt <= hi:
                problems.append(f"lead segment {i}: speed {seg.speed_kt} outside {model.speed_range}")
            if abs(seg.climb_fps) > model.max_climb_rate:
                problems.append(f"lead segment {i}: climb {seg.climb_fps} exceeds {model.max_climb_rate}")
        return problems

    def active(self, t: float) -> Segment | None:
        if not self.segments:
            return None
        elapsed = 0.0
        for seg in self.segments:
            elapsed += seg.duration_s
            if t < elapsed - 1e-9:
                return seg
        return self.segments[-1]

    def command(self, state: AircraftState) -> ControlCommand:
        seg = self.active(state.t)
        if seg is None:
            return ControlCommand(0.0, 0.0, state.v_true)
        speed = seg.speed_kt if seg.speed_kt is not None else state.v_true
        if seg.kind == "turn":
            return ControlCommand(0.0, seg.bank_deg, speed)
        if seg.kind == "climb":
            return ControlCommand(seg.climb_fps, 0.0, speed)
        roll = 0.0
        if seg.heading_deg is not None:
            # positive bank turns clockwise, i.e. decreases psi
            roll = _clamp(-1.5 * wrap_180(seg.heading_deg - state.psi), -30.0, 30.0)
        pitch = 0.0
        if seg.altitude_ft is not None:
            pitch = _clamp(0.2 * (seg.altitude_ft - state.U), -50.0, 50.0)
        return ControlCommand(pitch, roll, speed)


def advance_lead(script: LeadScript, state: AircraftState, dt: float,
                 model: AirframeModel | None = None) -> AircraftState:
    model = model or AirframeModel()
    return step(state, script.command(state), dt, model)


def trimmed(state: AircraftState) -> AircraftState:
    """Copy of ``state`` with a steady envelope (zero surface and roll rates)."""
    base = _synth_envelope(EnvelopeState(), state.phi, 0.0, max(state.v_true, 1e-6), 1.0)
    return replace(state, env=replace(base, de_rate=0.0, da_rate=0.0))


def with_phi(state: AircraftState, phi: float) -> AircraftState:
    """Copy of ``state`` with bank ``phi`` and a consistent steady envelope."""
    return trimmed(replace(state, phi=phi))
