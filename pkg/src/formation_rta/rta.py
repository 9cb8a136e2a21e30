"""Optimization-based run-time assurance filter.

The wingman is treated as a single integrator with a velocity control
``u = (uE, uN, uU)`` in ft/s bounded by a box.  Every safety constraint
``h(x) >= 0`` becomes a barrier row

    L_f h + L_g h . u + gamma * h >= 0

and the filter returns the point of the feasible polytope closest to the
desired velocity.  The QP is solved exactly by enumerating candidate active
sets; :func:`solve_projection` works on a batch of independent problems so
that Monte Carlo harnesses reuse the exact same solver.
"""

from __future__ import annotations

import enum
import itertools
import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .core import KT_TO_FPS, AircraftState, ConfigError


class BarrierKind(enum.Enum):
    COLLISION = "CollisionAvoidance"
    GEOFENCE_CIRCLE = "GeofenceCircle"
    GEOFENCE_HALFSPACE = "GeofenceHalfspace"


class RtaFault(enum.Enum):
    INFEASIBLE = "Infeasible"
    BAD_INPUT = "BadInput"
    FRAME_OVERRUN = "FrameOverrun"


# --------------------------------------------------------------------------
# Geofences (keep-in only)

@dataclass(frozen=True)
class GeofenceSpec:
    kind: str                                        # "circle" | "rect" | "polygon"
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.0
    E_min: float = 0.0
    E_max: float = 0.0
    N_min: float = 0.0
    N_max: float = 0.0
    vertices: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    @classmethod
    def circle(cls, center, radius) -> "GeofenceSpec":
        return cls("circle", center=tuple(center), radius=float(radius))

    @classmethod
    def rect(cls, E_min, E_max, N_min, N_max) -> "GeofenceSpec":
        return cls("rect", E_min=E_min, E_max=E_max, N_min=N_min, N_max=N_max)

    @classmethod
    def polygon(cls, vertices) -> "GeofenceSpec":
        return cls("polygon", vertices=tuple(tuple(map(float, v)) for v in vertices))

    def problems(self) -> list[str]:
        if self.kind == "circle":
            return [] if self.radius > 0 else ["geofence radius must be positive"]
        if self.kind == "rect":
            out = []
            if not self.E_min < self.E_max:
                out.append("geofence E_min must be below E_max")
            if not self.N_min < self.N_max:
                out.append("geofence N_min must be below N_max")
            return out
        if self.kind == "polygon":
            v = self.vertices
            if len(v) < 3:
                return ["geofence polygon needs at least 3 vertices"]
            n = len(v)
            for i in range(n):
                a, b, c = v[i], v[(i + 1) % n], v[(i + 2) % n]
                cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
                if not cross > 0:
                    return ["geofence polygon must be strictly convex and counterclockwise"]
            return []
        return [f"unknown geofence kind {self.kind!r}"]

    @classmethod
    def from_dict(cls, d: Mapping) -> "GeofenceSpec":
        kind = d.get("kind")
        try:
            if kind == "circle":
                return cls.circle(d["center_ft"], d["radius_ft"])
            if kind == "rect":
                return cls.rect(d["E_min_ft"], d["E_max_ft"], d["N_min_ft"], d["N_max_ft"])
            if kind == "polygon":
                return cls.polygon(d["vertices_ft"])
        except KeyError as exc:
            raise ConfigError(f"geofence {kind}: missing key {exc.args[0]}") from None
        raise ConfigError(f"unknown geofence kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "circle":
            return {"kind": "circle", "center_ft": list(self.center), "radius_ft": self.radius}
        if self.kind == "rect":
            return {"kind": "rect", "E_min_ft": self.E_min, "E_max_ft": self.E_max,
                    "N_min_ft": self.N_min, "N_max_ft": self.N_max}
        return {"kind": "polygon", "vertices_ft": [list(v) for v in self.vertices]}

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """Inward unit normals (n, 2) and offsets (n,) with h = normal . p + offset."""
        if self.kind == "rect":
            normals = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
            offsets = np.array([-self.E_min, self.E_max, -self.N_min, self.N_max])
            return normals, offsets
        if self.kind == "polygon":
            v = np.asarray(self.vertices, dtype=float)
            edges = np.roll(v, -1, axis=0) - v
            normals = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
            normals /= np.linalg.norm(normals, axis=1, keepdims=True)
            offsets = -np.einsum("ij,ij->i", normals, v)
            return normals, offsets
        raise ValueError("circle geofence has no halfspace form")


def fence_terms(spec: GeofenceSpec, wing_pos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Geofence values (B, n) and gradients (B, n, 3) for wingman positions (B, 3)."""
    p = np.atleast_2d(np.asarray(wing_pos, dtype=float))
    B = p.shape[0]
    if spec.kind == "circle":
        d = p[:, :2] - np.asarray(spec.center, dtype=float)
        dist = np.hypot(d[:, 0], d[:, 1])
        h = spec.radius - dist
        grad = np.zeros((B, 1, 3))
        nz = dist > 0
        grad[nz, 0, :2] = -d[nz] / dist[nz, None]
        return h[:, None], grad
    normals, offsets = spec.halfspaces()
    h = p[:, :2] @ normals.T + offsets
    grad = np.zeros((B, len(offsets), 3))
    grad[:, :, :2] = normals
    return h, grad


def geofence_constraints(spec: GeofenceSpec, wing: AircraftState) -> list[tuple[float, np.ndarray]]:
    """List of (h, grad) pairs for the keep-in fence at the wingman position.

    At the exact center of a circular fence the gradient is undefined; a zero
    gradient is returned there (the constraint is inactive, h = r).
    """
    h, grad = fence_terms(spec, np.array([wing.E, wing.N, wing.U]))
    return [(float(h[0, i]), grad[0, i].copy()) for i in range(h.shape[1])]


def max_penetration(spec: GeofenceSpec, wing_pos: np.ndarray) -> np.ndarray:
    """Distance outside the fence per position (0 when inside)."""
    h, _ = fence_terms(spec, wing_pos)
    return np.maximum(0.0, -h.min(axis=1))


# --------------------------------------------------------------------------
# Barrier constraints

def collision_terms(lead_pos, lead_vel, wing_pos, rho_c: float):
    """Batched collision barrier: h (B,), unit gradient (B, 3), L_f h (B,)."""
    d = np.atleast_2d(wing_pos) - np.atleast_2d(lead_pos)
    dist = np.linalg.norm(d, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        grad = d / dist[:, None]
    lf = -np.einsum("ij,ij->i", grad, np.atleast_2d(lead_vel))
    return dist - rho_c, grad, lf


def collision_h(lead: AircraftState, wing: AircraftState, rho_c: float) -> tuple[float, np.ndarray]:
    if not rho_c > 0:
        raise ValueError("rho_c must be positive")
    h, grad, _ = collision_terms(np.array(lead.position), np.zeros(3), np.array(wing.position), rho_c)
    if not np.all(np.isfinite(grad)):
        raise ValueError("collision gradient undefined for coincident positions")
    return float(h[0]), grad[0]


@dataclass(frozen=True)
class BarrierConstraint:
    id: int
    kind: BarrierKind
    h: float
    grad: tuple[float, float, float]
    lf: float
    gamma: float

    def row(self) -> tuple[np.ndarray, float]:
        """(a, b) such that the barrier condition reads a . u >= b."""
        return np.asarray(self.grad, dtype=float), -self.lf - self.gamma * self.h

    def value(self, u) -> float:
        return self.lf + float(np.dot(self.grad, u)) + self.gamma * self.h


@dataclass(frozen=True)
class BarrierGains:
    collision: float = 1.0
    geofence: float = 1.0

    def __post_init__(self):
        # alpha(h) = gamma*h is class-kappa iff gamma > 0
        for name in ("collision", "geofence"):
            g = getattr(self, name)
            if not (math.isfinite(g) and g > 0):
                raise ConfigError(f"barrier gain {name} must be a positive finite number, got {g}")


def build_constraints(lead: AircraftState, wing: AircraftState, geofence: GeofenceSpec | None,
                      rho_c: float, gains: BarrierGains = BarrierGains(), *,
                      collision: bool = True, fence: bool = True) -> list[BarrierConstraint]:
    """Barrier rows at the current state; lead velocity enters as measured drift."""
    rows: list[BarrierConstraint] = []
    if collision:
        if not rho_c > 0:
            raise ValueError("rho_c must be positive")
        h, grad, lf = collision_terms(np.array(lead.position), np.array(lead.velocity),
                                      np.array(wing.position), rho_c)
        if not np.all(np.isfinite(grad)):
            raise ValueError("collision gradient undefined for coincident positions")
        rows.append(BarrierConstraint(0, BarrierKind.COLLISION, float(h[0]),
                                      tuple(map(float, grad[0])), float(lf[0]), gains.collision))
    if fence and geofence is not None:
        kind = BarrierKind.GEOFENCE_CIRCLE if geofence.kind == "circle" else BarrierKind.GEOFENCE_HALFSPACE
        for h, grad in geofence_constraints(geofence, wing):
            rows.append(BarrierConstraint(len(rows), kind, h, tuple(map(float, grad)), 0.0,
                                          gains.geofence))
    return rows


def in_safe_set(constraints: Sequence) -> bool:
    """True iff every constraint value is non-negative (closed set)."""
    for c in constraints:
        h = c.h if isinstance(c, BarrierConstraint) else c[0]
        if not h >= 0:
            return False
    return True


# --------------------------------------------------------------------------
# QP

@dataclass(frozen=True)
class RtaModel:
    """Single-integrator synthesis model: admissible velocity box per axis [ft/s]."""

    lo: tuple[float, float, float] = (-420 * KT_TO_FPS, -420 * KT_TO_FPS, -100.0)
    hi: tuple[float, float, float] = (420 * KT_TO_FPS, 420 * KT_TO_FPS, 100.0)

    def __post_init__(self):
        if not all(l < h for l, h in zip(self.lo, self.hi)):
            raise ConfigError("RTA velocity box must be nonempty on every axis")

    @classmethod
    def for_airframe(cls, max_speed_kt: float, max_climb_fps: float) -> "RtaModel":
        v = max_speed_kt * KT_TO_FPS
        return cls((-v, -v, -max_climb_fps), (v, v, max_climb_fps))

    def box_rows(self) -> tuple[np.ndarray, np.ndarray]:
        eye = np.eye(3)
        A = np.concatenate([eye, -eye])
        b = np.concatenate([np.asarray(self.lo, float), -np.asarray(self.hi, float)])
        return A, b

    def clip(self, u) -> np.ndarray:
        return np.clip(np.asarray(u, dtype=float), self.lo, self.hi)

    def saturate(self, u) -> np.ndarray:
        """Scale the horizontal part into the box keeping its direction, then clip."""
        u = np.array(u, dtype=float)
        lim = min(-self.lo[0], self.hi[0], -self.lo[1], self.hi[1])
        n = float(np.hypot(u[0], u[1]))
        if lim > 0 and n > lim:
            u[:2] *= lim / n
        return self.clip(u)


@lru_cache(maxsize=64)
def _subsets(k: int, m: int = 3) -> tuple[tuple[int, ...], ...]:
    return tuple(c for s in range(1, min(k, m) + 1) for c in itertools.combinations(range(k), s))


def solve_projection(A: np.ndarray, b: np.ndarray, u_des: np.ndarray, tol: float = 1e-9):
    """Exact batched solution of  min ||u - u_des||^2  s.t.  A u >= b.

    A: (B, k, 3), b: (B, k), u_des: (B, 3).  Returns (u, ok, active) where
    ``ok`` is False for infeasible problems (u is NaN there) and ``active``
    lists the index tuple of the active set found for each problem (empty for
    passthrough).

    Candidate active sets are enumerated by size then lexicographically; the
    first one whose equality-constrained projection is primal feasible with
    non-negative multipliers satisfies the KKT conditions and is therefore
    the unique optimum.  At most three rows are needed in three dimensions.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    u_des = np.asarray(u_des, dtype=float)
    B, k, _ = A.shape
    out = np.full((B, 3), np.nan)
    active: list[tuple[int, ...] | None] = [None] * B

    anorm = np.linalg.norm(A, axis=2)

    def feasible(x, rows):
        slack = np.einsum("bkj,bj->bk", A[rows], x) - b[rows]
        scale = 1.0 + np.abs(b[rows]) + anorm[rows] * np.linalg.norm(x, axis=1)[:, None]
        return np.all(slack >= -tol * scale, axis=1)

    everyone = np.arange(B)
    ok0 = feasible(u_des, everyone)
    out[ok0] = u_des[ok0]
    for i in np.flatnonzero(ok0):
        active[i] = ()
    todo = np.flatnonzero(~ok0)

    for S in _subsets(k):
        if todo.size == 0:
            break
        idx = list(S)
        As = A[todo][:, idx, :]
        bs = b[todo][:, idx]
        ut = u_des[todo]
        G = As @ As.transpose(0, 2, 1)
        rhs = bs - np.einsum("bsj,bj->bs", As, ut)
        if len(idx) == 1:
            g = G[:, 0, 0]
            good = g > 1e-18
            lam = np.zeros((todo.size, 1))
            lam[good, 0] = rhs[good, 0] / g[good]
        else:
            diag = np.prod(np.diagonal(G, axis1=1, axis2=2), axis=1)
            good = np.linalg.det(G) > 1e-12 * np.maximum(diag, 1e-300)
            lam = np.zeros((todo.size, len(idx)))
            if good.any():
                lam[good] = np.linalg.solve(G[good], rhs[good][..., None])[..., 0]
        x = ut + np.einsum("bsj,bs->bj", As, lam)
        dual_ok = np.all(lam >= -tol * (1.0 + np.abs(lam).max(axis=1, keepdims=True)), axis=1)
        cand = good & dual_ok
        if not cand.any():
            continue
        cand_rows = todo[cand]
        prim = feasible(x[cand], cand_rows)
        hit = cand_rows[prim]
        out[hit] = x[cand][prim]
        for i in hit:
            active[i] = S
        todo = np.setdiff1d(todo, hit, assume_unique=True)

    ok = np.ones(B, dtype=bool)
    ok[todo] = False
    return out, ok, active


@dataclass(frozen=True)
class FilterResult:
    u_safe: tuple[float, float, float] | None
    intervened: bool = False
    fault: RtaFault | None = None
    active_set: tuple[int, ...] = ()

    @property
    def healthy(self) -> bool:
        return self.fault is None and self.u_safe is not None


def stack_rows(constraints: Sequence[BarrierConstraint], model: RtaModel) -> tuple[np.ndarray, np.ndarray]:
    """Barrier rows followed by the six box faces."""
    Abox, bbox = model.box_rows()
    if not constraints:
        return Abox, bbox
    rows = [c.row() for c in constraints]
    A = np.concatenate([np.array([r[0] for r in rows]), Abox])
    b = np.concatenate([np.array([r[1] for r in rows]), bbox])
    return A, b


def filter(u_des, constraints: Sequence[BarrierConstraint], model: RtaModel, *,
           tol: float = 1e-9, budget_s: float | None = None) -> FilterResult:
    """Minimally invasive safe velocity closest to ``u_des``."""
    started = time.perf_counter()
    u = np.asarray(u_des, dtype=float)
    if u.shape != (3,) or not np.all(np.isfinite(u)):
        return FilterResult(None, fault=RtaFault.BAD_INPUT)
    for c in constraints:
        if not (math.isfinite(c.h) and math.isfinite(c.lf) and all(map(math.isfinite, c.grad))):
            return FilterResult(None, fault=RtaFault.BAD_INPUT)
    A, b = stack_rows(constraints, model)
    x, ok, active = solve_projection(A[None], b[None], u[None], tol=tol)
    if budget_s is not None and time.perf_counter() - started > budget_s:
        return FilterResult(None, fault=RtaFault.FRAME_OVERRUN)
    if not ok[0]:
        return FilterResult(None, fault=RtaFault.INFEASIBLE)
    if active[0] == ():
        return FilterResult(tuple(map(float, u)), intervened=False)
    u_safe = x[0]
    intervened = bool(np.linalg.norm(u_safe - u) > tol * (1.0 + np.linalg.norm(u)))
    return FilterResult(tuple(map(float, u_safe)), intervened=intervened, active_set=active[0])


def realize_min_speed(u, constraints: Sequence[BarrierConstraint], v_min_fps: float,
                      n_headings: int = 720) -> np.ndarray:
    """Closest barrier-feasible velocity an airframe with a minimum speed can fly.

    The synthesis model lets the filter answer "slow down"; an aircraft cannot
    fly below ``v_min_fps``.  When the horizontal part of ``u`` is slower than
    that, candidates on the minimum-speed circle (same vertical rate) are
    checked against the barrier rows and the feasible one nearest ``u`` wins;
    with none feasible, the candidate with the largest worst-row slack.
    """
    u = np.asarray(u, dtype=float)
    if not constraints or math.hypot(u[0], u[1]) >= v_min_fps:
        return u
    th = np.arange(n_headings) * (2.0 * math.pi / n_headings)
    cand = np.stack([v_min_fps * np.cos(th), v_min_fps * np.sin(th), np.full(n_headings, u[2])], axis=1)
    A = np.array([c.row()[0] for c in constraints])
    b = np.array([c.row()[1] for c in constraints])
    worst = (cand @ A.T - b).min(axis=1)
    ok = worst >= -1e-9
    if ok.any():
        d = np.linalg.norm(cand - u, axis=1)
        d[~ok] = np.inf
        return cand[int(np.argmin(d))]
    return cand[int(np.argmax(worst))]


def kkt_residuals(A: np.ndarray, b: np.ndarray, u_des: np.ndarray, u: np.ndarray) -> dict:
    """KKT residuals of a candidate optimum (multipliers by least squares on the active rows)."""
    slack = A @ u - b
    act = np.flatnonzero(np.abs(slack) <= 1e-9 * (1.0 + np.abs(b)))
    stationarity_target = u - u_des
    if act.size:
        lam, *_ = np.linalg.lstsq(A[act].T, stationarity_target, rcond=None)
        stat = np.linalg.norm(A[act].T @ lam - stationarity_target)
        dual = float(max(0.0, -lam.min()))
    else:
        stat = float(np.linalg.norm(stationarity_target))
        dual = 0.0
    return {"primal": float(max(0.0, -slack.min())), "stationarity": float(stat), "dual": dual}
