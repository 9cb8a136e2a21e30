"""Soft safety constraint monitors (logged, never enforced)."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Mapping

import numpy as np

from .core import AircraftState, ConfigError, aisl, aspect_angle, field_kwargs


@dataclass(frozen=True)
class SscConfig:
    LL: float = 30.0                 # lead length [ft]
    FL: float = 25.0                 # follow length [ft]
    tnsc_threshold: float = 50.0     # ft
    tnsc_range: float = 500.0        # ft
    afsc_range: float = 500.0        # ft
    sfc_band: tuple[float, float] = (100.0, 300.0)
    sfc_closure_limit: float = 10.0  # ft/s
    jec_window: float = 60.0         # s
    jec_radius: float = 50.0         # ft

    def __post_init__(self):
        problems = [f"SSC {f.name} must be positive" for f in fields(self)
                    if f.name != "sfc_band" and not getattr(self, f.name) > 0]
        lo, hi = self.sfc_band
        if not 0 < lo < hi:
            problems.append("SSC sfc_band must be positive and ordered")
        if problems:
            raise ConfigError(problems)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SscConfig":
        return cls(**field_kwargs(cls, d, "ssc"))


@dataclass(frozen=True)
class Verdict:
    ok: bool
    value: float = math.nan
    detail: str = ""


def tns(aisl_ft: float, theta_aa: float, cfg: SscConfig) -> float:
    return aisl_ft * math.cos(math.radians(abs(theta_aa))) - cfg.LL - cfg.FL


def check_tnsc(lead: AircraftState, wing: AircraftState, cfg: SscConfig) -> Verdict:
    a = aisl(lead, wing)
    if a == 0.0:
        value = -cfg.LL - cfg.FL
        return Verdict(not a < cfg.tnsc_range, value, "coincident")
    theta = aspect_angle(lead, wing)
    value = tns(a, theta, cfg)
    if a < cfg.tnsc_range and (value <= cfg.tnsc_threshold or abs(theta) >= 90.0):
        return Verdict(False, value, "ahead of 3-9 line" if abs(theta) >= 90.0 else "tail-nose separation")
    return Verdict(True, value)


def check_afsc(lead: AircraftState, wing: AircraftState, cfg: SscConfig) -> Verdict:
    a = aisl(lead, wing)
    stack = wing.U - lead.U
    # at or below the lead is compliant
    return Verdict(not (a < cfg.afsc_range and stack > 0.0), stack)


def check_sfc(lead: AircraftState, wing: AircraftState, prev_aisl: float | None, dt: float,
              cfg: SscConfig) -> Verdict:
    a = aisl(lead, wing)
    rel = math.hypot(lead.vE - wing.vE, lead.vN - wing.vN)
    if prev_aisl is None:
        return Verdict(True, 0.0, f"relative speed {rel:.3f}")
    closure = -(a - prev_aisl) / dt
    lo, hi = cfg.sfc_band
    ok = not (lo <= a <= hi and closure > cfg.sfc_closure_limit)
    return Verdict(ok, closure, f"relative speed {rel:.3f}")


class JetWashTrail:
    """Time-ordered lead samples spanning at most ``window`` seconds."""

    def __init__(self, window: float, capacity: int = 4096):
        self.window = window
        self._buf = np.empty((max(capacity, 4), 4))
        self._start = 0
        self._end = 0

    def __len__(self) -> int:
        return self._end - self._start

    def push(self, t: float, E: float, N: float, U: float) -> None:
        if self._end == len(self._buf):
            n = len(self)
            if n * 2 > len(self._buf):
                grown = np.empty((len(self._buf) * 2, 4))
                grown[:n] = self._buf[self._start:self._end]
                self._buf = grown
            else:
                self._buf[:n] = self._buf[self._start:self._end]
            self._start, self._end = 0, n
        self._buf[self._end] = (t, E, N, U)
        self._end += 1
        live = self._buf[self._start:self._end, 0]
        self._start += int(np.searchsorted(live, t - self.window - 1e-9, side="left"))

    def samples(self) -> np.ndarray:
        return self._buf[self._start:self._end]


def polyline_distance(points: np.ndarray, p) -> float:
    """Minimum distance from ``p`` to the polyline through ``points`` (n, 3)."""
    pts = np.asarray(points, dtype=float)
    p = np.asarray(p, dtype=float)
    if len(pts) == 1:
        return float(np.linalg.norm(p - pts[0]))
    a, b = pts[:-1], pts[1:]
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    s = np.einsum("ij,ij->i", p - a, ab)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(L2 > 0, s / L2, 0.0)
    s = np.clip(s, 0.0, 1.0)
    foot = a + s[:, None] * ab
    return float(np.sqrt(np.min(np.einsum("ij,ij->i", p - foot, p - foot))))


def check_jec(trail: JetWashTrail | np.ndarray, wing: AircraftState, cfg: SscConfig) -> Verdict:
    pts = trail.samples()[:, 1:] if isinstance(trail, JetWashTrail) else np.asarray(trail)
    if len(pts) < 2:
        return Verdict(True, math.inf, "no zone yet")
    d = polyline_distance(pts, (wing.E, wing.N, wing.U))
    return Verdict(not d < cfg.jec_radius, d)
