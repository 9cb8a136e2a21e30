"""Rejoin geometry, success timing and the primary-controller policies.

A policy maps (wingman state, lead report, rejoin spec, RTA model) to a
desired wingman velocity in ft/s.  It stands in for a trained network; any
deterministic callable with that signature can be plugged in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping

import numpy as np

from .core import (KT_TO_FPS, AircraftState, ConfigError, ContingencyKind, ContingencyPlan,
                   EnvelopeState, PositionReport, heading_vector)
from .dynamics import target_bank_speed
from .rta import RtaModel


@dataclass(frozen=True)
class RejoinSpec:
    theta_AA: float = 30.0     # deg
    rho_r: float = 800.0       # ft
    rho_e: float = 100.0       # ft
    t_success: float = 10.0    # s

    def __post_init__(self):
        problems = []
        if not self.rho_e > 0:
            problems.append("rejoin rho_e must be positive")
        if not self.t_success > 0:
            problems.append("rejoin t_success must be positive")
        if not self.rho_r > self.rho_e:
            problems.append("rejoin rho_r must exceed rho_e")
        if problems:
            raise ConfigError(problems)

    @classmethod
    def from_dict(cls, d: Mapping) -> "RejoinSpec":
        unknown = sorted(set(d) - {"theta_AA_deg", "rho_r_ft", "rho_e_ft", "t_success_s"})
        if unknown:
            raise ConfigError([f"unknown rejoin key {k!r}" for k in unknown])
        return cls(theta_AA=d.get("theta_AA_deg", 30.0), rho_r=d.get("rho_r_ft", 800.0),
                   rho_e=d.get("rho_e_ft", 100.0), t_success=d.get("t_success_s", 10.0))


def rejoin_point(lead: AircraftState, spec: RejoinSpec) -> tuple[float, float, float]:
    """Rejoin position at range rho_r and aspect theta_AA off the lead's tail (co-altitude)."""
    ang = math.radians(lead.psi + 180.0 + spec.theta_AA)
    return (lead.E + spec.rho_r * math.cos(ang),
            lead.N + spec.rho_r * math.sin(ang),
            lead.U)


@dataclass(frozen=True)
class RejoinTimer:
    t_rejoin: float = 0.0
    succeeded: bool = False
    t_first_success: float | None = None


def update_success(timer: RejoinTimer, wing: AircraftState, point, spec: RejoinSpec,
                   dt: float) -> RejoinTimer:
    inside = math.dist((wing.E, wing.N, wing.U), point) <= spec.rho_e
    t_rejoin = timer.t_rejoin + dt if inside else 0.0
    # tolerance absorbs accumulation error from summing dt
    now = t_rejoin >= spec.t_success - 1e-9
    if timer.succeeded:
        return RejoinTimer(t_rejoin, True, timer.t_first_success)
    return RejoinTimer(t_rejoin, now, wing.t if now else None)


# --------------------------------------------------------------------------
# Lead estimate from reports

def lead_from_report(report: PositionReport) -> AircraftState:
    E, N, U = report.position
    phi, _theta, psi = report.orientation
    vE, vN, vU = report.velocities
    return AircraftState(t=report.timestamp, E=E, N=N, U=U, psi=psi, phi=phi,
                         v_true=report.tas, vE=vE, vN=vN, vU=vU,
                         env=EnvelopeState(Vc=report.cas, Nz=report.normal_accel))


def extrapolate(report: PositionReport, t: float) -> PositionReport:
    """Dead-reckon a report's position forward to time ``t``."""
    age = t - report.timestamp
    if age <= 0:
        return report
    E, N, U = report.position
    vE, vN, vU = report.velocities
    return replace(report, position=(E + vE * age, N + vN * age, U + vU * age))


# --------------------------------------------------------------------------
# Policies (desired wingman velocity, ft/s)

Policy = Callable[[AircraftState, PositionReport, RejoinSpec, RtaModel], np.ndarray]


def scripted_policy(wing: AircraftState, lead_report: PositionReport, spec: RejoinSpec,
                    model: RtaModel, gain: float = 0.1) -> np.ndarray:
    """Proportional pursuit of the rejoin point on top of a speed-biased lead feed-forward."""
    lead = lead_from_report(lead_report)
    point = np.array(rejoin_point(lead, spec))
    v_r = lead.v_true
    if lead.v_true > 0 and abs(lead.phi) < 89.0:
        _, v_r = target_bank_speed(lead, spec.theta_AA, spec.rho_r)
    ff = np.array([lead.vE, lead.vN, 0.0])
    if lead.v_true > 0:
        ff *= v_r / lead.v_true
    ff[2] = lead.vU
    u = ff + gain * (point - np.array(wing.position))
    return model.saturate(u)


def charge_lead_policy(wing: AircraftState, lead_report: PositionReport, spec: RejoinSpec,
                       model: RtaModel, gain: float = 1.0) -> np.ndarray:
    """Adversarial: fly straight at the lead as fast as the box allows."""
    lead = lead_from_report(lead_report)
    u = np.array(lead.velocity) + gain * (np.array(lead.position) - np.array(wing.position))
    return model.saturate(u)


def hold_velocity_policy(wing: AircraftState, lead_report: PositionReport, spec: RejoinSpec,
                         model: RtaModel) -> np.ndarray:
    return model.clip([wing.vE, wing.vN, 0.0])


POLICIES: dict[str, Policy] = {
    "scripted_rejoin": scripted_policy,
    "charge_lead": charge_lead_policy,
    "hold_velocity": hold_velocity_policy,
}


# --------------------------------------------------------------------------
# Contingency behaviour

def loiter_center(wing: AircraftState, radius: float) -> tuple[float, float, float]:
    """Center of a clockwise orbit that passes through the wingman's position."""
    cE, cN = heading_vector(wing.psi)
    # right of the velocity vector
    return (wing.E + radius * cN, wing.N - radius * cE, wing.U)


def contingency_velocity(plan: ContingencyPlan, wing: AircraftState, anchor,
                         model: RtaModel) -> np.ndarray:
    """Velocity command that executes ``plan``; ``anchor`` is the loiter center."""
    speed = wing.v_true * KT_TO_FPS
    if plan.kind is ContingencyKind.LOITER and anchor is not None:
        r = np.array([wing.E - anchor[0], wing.N - anchor[1]])
        d = float(np.hypot(*r))
        if d > 1e-6:
            rhat = r / d
            tangent = np.array([rhat[1], -rhat[0]])     # clockwise
            uh = speed * tangent + 0.2 * (plan.loiter_radius_ft - d) * rhat
            return model.saturate([uh[0], uh[1], 0.2 * (anchor[2] - wing.U)])
    if plan.kind is ContingencyKind.FLY_TO_POINT and plan.target_ft is not None:
        d = np.array(plan.target_ft, dtype=float) - np.array(wing.position)
        n = float(np.linalg.norm(d[:2]))
        if n > 1e-6:
            uh = speed * d[:2] / n
            return model.saturate([uh[0], uh[1], 0.2 * d[2]])
    return model.clip([wing.vE, wing.vN, 0.0])
