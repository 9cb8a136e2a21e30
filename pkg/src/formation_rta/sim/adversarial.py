"""Batched single-integrator episodes under an adversarial desired velocity.

This harness checks the filter itself: the wingman moves exactly with the
filtered velocity (the synthesis model), the lead flies a constant-bank turn,
and the desired velocity switches between charging the lead, charging the
fence and random constant commands.  All episodes advance together so a
thousand 60 s runs take seconds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import KT_TO_FPS, TURN_K2
from ..rta import GeofenceSpec, RtaModel, collision_terms, fence_terms, solve_projection
from .rng import substream

CHARGE_LEAD, CHARGE_FENCE, RANDOM = 0, 1, 2


@dataclass(frozen=True)
class SuiteConfig:
    n_episodes: int = 1000
    duration_s: float = 60.0
    dt: float = 0.02
    rho_c: float = 500.0
    rho_c_inflation: float = 0.0
    fence_radius: float = 30000.0
    gamma_collision: float = 1.0
    gamma_geofence: float = 1.0
    rta_enabled: bool = True
    lead_speed_kt: tuple[float, float] = (150.0, 250.0)
    lead_bank_deg: tuple[float, float] = (-30.0, 30.0)
    lead_start_radius: float = 3000.0
    wing_range: tuple[float, float] = (1000.0, 6000.0)
    altitude_ft: float = 10000.0
    altitude_spread_ft: float = 500.0
    segment_s: tuple[float, float] = (5.0, 15.0)
    mode_probs: tuple[float, float, float] = (0.7, 0.15, 0.15)
    max_speed_kt: float = 420.0
    max_climb_fps: float = 100.0


@dataclass
class SuiteResult:
    min_h_collision: np.ndarray      # (B,) against the nominal rho_c
    min_h_fence: np.ndarray          # (B,)
    intervention_frames: np.ndarray  # (B,)
    infeasible_frames: np.ndarray    # (B,)
    frames: int

    @property
    def min_h(self) -> np.ndarray:
        return np.minimum(self.min_h_collision, self.min_h_fence)

    def violations(self, eps: float = 1.0) -> np.ndarray:
        return self.min_h < -eps

    def h1_violations(self, eps: float = 1.0) -> np.ndarray:
        return self.min_h_collision < -eps

    def h3_violations(self, eps: float = 1.0) -> np.ndarray:
        return self.min_h_fence < -eps


def _initial(cfg: SuiteConfig, seed: int):
    rng = substream(seed, "mc_geometry")
    B = cfg.n_episodes
    r = cfg.lead_start_radius * np.sqrt(rng.uniform(0, 1, B))
    th = rng.uniform(0, 2 * np.pi, B)
    lead = np.stack([r * np.cos(th), r * np.sin(th), np.full(B, cfg.altitude_ft)], axis=1)
    psi = rng.uniform(0, 360, B)
    v_l = rng.uniform(*cfg.lead_speed_kt, B)
    bank = rng.uniform(*cfg.lead_bank_deg, B)
    rng_w = rng.uniform(*cfg.wing_range, B)
    bearing = rng.uniform(0, 2 * np.pi, B)
    wing = lead + np.stack([rng_w * np.cos(bearing), rng_w * np.sin(bearing),
                            rng.uniform(-cfg.altitude_spread_ft, cfg.altitude_spread_ft, B)], axis=1)
    # keep the wingman inside the fence
    rad = np.hypot(wing[:, 0], wing[:, 1])
    limit = cfg.fence_radius - 1000.0
    scale = np.where(rad > limit, limit / np.maximum(rad, 1e-9), 1.0)
    wing[:, :2] *= scale[:, None]
    return lead, psi, v_l, bank, wing


def _lead_velocity(psi, v_l):
    v = v_l * KT_TO_FPS
    rad = np.radians(psi)
    return np.stack([v * np.cos(rad), v * np.sin(rad), np.zeros_like(v)], axis=1)


def run_suite(cfg: SuiteConfig, seed: int) -> SuiteResult:
    B = cfg.n_episodes
    n = int(round(cfg.duration_s / cfg.dt))
    dt = cfg.dt
    lead, psi, v_l, bank, wing = _initial(cfg, seed)
    psi_rate = -TURN_K2 * np.tan(np.radians(bank)) / v_l
    fence = GeofenceSpec.circle((0.0, 0.0), cfg.fence_radius)
    box = RtaModel.for_airframe(cfg.max_speed_kt, cfg.max_climb_fps)
    Abox, bbox = box.box_rows()
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    vmax = cfg.max_speed_kt * KT_TO_FPS
    rho_f = cfg.rho_c * (1.0 + cfg.rho_c_inflation)

    adv = substream(seed, "adversarial")
    mode = np.full(B, CHARGE_LEAD)
    switch_at = np.round(adv.uniform(*cfg.segment_s, B) / dt).astype(int)
    rand_u = adv.uniform(lo, hi, (B, 3))

    min_hc = np.full(B, np.inf)
    min_hf = np.full(B, np.inf)
    interventions = np.zeros(B, dtype=int)
    infeasible = np.zeros(B, dtype=int)
    last_u = np.zeros((B, 3))

    for k in range(n):
        v_lead = _lead_velocity(psi, v_l)
        hc_true, _, _ = collision_terms(lead, v_lead, wing, cfg.rho_c)
        hf, gf = fence_terms(fence, wing)
        np.minimum(min_hc, hc_true, out=min_hc)
        np.minimum(min_hf, hf[:, 0], out=min_hf)

        # adversarial desired velocity
        due = switch_at <= k
        if due.any():
            m = int(due.sum())
            mode[due] = adv.choice(3, size=m, p=cfg.mode_probs)
            switch_at[due] = k + np.round(adv.uniform(*cfg.segment_s, m) / dt).astype(int)
            rand_u[due] = adv.uniform(lo, hi, (m, 3))
        to_lead = lead - wing
        d = np.linalg.norm(to_lead, axis=1, keepdims=True)
        u_des = np.where((mode == CHARGE_LEAD)[:, None], vmax * to_lead / np.maximum(d, 1e-9), rand_u)
        out = np.concatenate([wing[:, :2], np.zeros((B, 1))], axis=1)
        r = np.linalg.norm(out, axis=1, keepdims=True)
        u_out = vmax * out / np.maximum(r, 1e-9)
        u_des = np.where((mode == CHARGE_FENCE)[:, None], u_out, u_des)
        u_des = np.clip(u_des, lo, hi)

        if cfg.rta_enabled:
            hc, gc, lf = collision_terms(lead, v_lead, wing, rho_f)
            A = np.concatenate([gc[:, None, :], gf, np.broadcast_to(Abox, (B, 6, 3))], axis=1)
            b = np.concatenate([(-lf - cfg.gamma_collision * hc)[:, None],
                                -cfg.gamma_geofence * hf,
                                np.broadcast_to(bbox, (B, 6))], axis=1)
            u, ok, active = solve_projection(A, b, u_des)
            infeasible += ~ok
            u = np.where(ok[:, None], u, last_u)
            interventions += np.array([bool(a) for a in active]) & ok
        else:
            u = u_des
        last_u = u

        wing = wing + u * dt
        lead = lead + v_lead * dt
        psi = psi + psi_rate * dt

    v_lead = _lead_velocity(psi, v_l)
    hc_true, _, _ = collision_terms(lead, v_lead, wing, cfg.rho_c)
    hf, _ = fence_terms(fence, wing)
    np.minimum(min_hc, hc_true, out=min_hc)
    np.minimum(min_hf, hf[:, 0], out=min_hf)
    return SuiteResult(min_hc, min_hf, interventions, infeasible, n)


def summary(res: SuiteResult, eps: float = 1.0) -> dict:
    return {
        "episodes": int(res.min_h.size),
        "violations": int(res.violations(eps).sum()),
        "h1_violations": int(res.h1_violations(eps).sum()),
        "h3_violations": int(res.h3_violations(eps).sum()),
        "min_h_ft": float(res.min_h.min()),
        "infeasible_frames": int(res.infeasible_frames.sum()),
        "intervention_rate": float(res.intervention_frames.sum() / (res.frames * res.min_h.size)),
    }
