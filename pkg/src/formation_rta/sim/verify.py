"""Trace verifier: hard-constraint, completeness and soft-constraint verdicts.

Everything here is recomputed from trace records; no simulation state is
consulted.  Wingman positions come from W4 (the airframe output of frame k
is the state at frame k+1) and the scenario record (frame 0).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..core import AircraftState, aisl
from ..mission import RejoinSpec, RejoinTimer, rejoin_point, update_success
from ..rta import GeofenceSpec, max_penetration
from ..ssc import JetWashTrail, SscConfig, check_afsc, check_jec, check_sfc, check_tnsc
from .trace import LIVE_SIGNALS, Trace, read_trace

_STATE = ("E", "N", "U", "psi", "phi", "v_true", "vE", "vN", "vU")
SSC_NAMES = ("TNSC", "AFSC", "SFC", "JEC")


@dataclass
class VerifierReport:
    frames: int = 0
    rho_c_ft: float = math.nan
    tolerance_ft: float = 1.0
    h1_min_distance_ft: float = math.nan
    h3_max_penetration_ft: float = math.nan
    c5_missing: int = 0
    ssc_violations: dict = field(default_factory=lambda: {n: 0 for n in SSC_NAMES})
    epm_trips: list = field(default_factory=list)        # (t, reason)
    rejoin_succeeded: bool = False
    rejoin_time_s: float | None = None
    interventions: int = 0
    rta_faults: int = 0
    pilot_frames: int = 0

    @property
    def h1_margin_ft(self) -> float:
        return self.h1_min_distance_ft - self.rho_c_ft

    @property
    def h1_violated(self) -> bool:
        return not self.h1_margin_ft >= -self.tolerance_ft

    @property
    def h3_violated(self) -> bool:
        return not self.h3_max_penetration_ft <= self.tolerance_ft

    @property
    def c5_complete(self) -> bool:
        return self.c5_missing == 0

    @property
    def hard_violation(self) -> bool:
        return self.h1_violated or self.h3_violated or not self.c5_complete

    def to_dict(self) -> dict:
        d = asdict(self)
        d["epm_trips"] = [list(x) for x in self.epm_trips]
        d.update(h1_margin_ft=self.h1_margin_ft, h1_violated=self.h1_violated,
                 h3_violated=self.h3_violated, c5_complete=self.c5_complete,
                 hard_violation=self.hard_violation)
        return d

    def rows(self) -> list[tuple[str, str]]:
        """Flat (key, value) pairs for delimited output."""
        out = []
        for k, v in self.to_dict().items():
            if k == "ssc_violations":
                out.extend((f"ssc_{n}", str(c)) for n, c in v.items())
            elif k == "epm_trips":
                out.append(("epm_trip_count", str(len(v))))
                out.extend((f"epm_trip_{i}", f"{tt:.2f}s {r}") for i, (tt, r) in enumerate(v))
            elif v is None:
                out.append((k, ""))
            elif isinstance(v, float):
                out.append((k, f"{v:.9g}"))
            else:
                out.append((k, str(v).lower() if isinstance(v, bool) else str(v)))
        return out


def _loads(v, default):
    if isinstance(v, str):
        return json.loads(v)
    return default if v is None else v


def _state(p, t: float) -> AircraftState:
    return AircraftState(t=t, **{k: float(p[k]) for k in _STATE})


def verify_trace(trace: Trace | str | Path) -> VerifierReport:
    if not isinstance(trace, Trace):
        trace = read_trace(trace)
    meta = trace.scenario()
    live = tuple(meta["live_signals"].split("|")) if meta.get("live_signals") else LIVE_SIGNALS

    by_frame: dict[int, dict[str, dict]] = {}
    for r in trace.records:
        if r.frame >= 0:
            by_frame.setdefault(r.frame, {})[r.signal] = r.payload
    n = meta.get("n_frames")
    n = int(n) if n is not None else (max(by_frame) + 1 if by_frame else 0)

    rep = VerifierReport(frames=n)
    rep.rho_c_ft = float(meta.get("rho_c_ft", math.nan))
    rep.tolerance_ft = float(meta.get("hard_tolerance_ft", 1.0))

    # C5: every live signal in every frame
    if n == 0:
        rep.c5_missing = len(live)
    else:
        rep.c5_missing = sum(len(set(live) - set(by_frame.get(k, {}))) for k in range(n))

    dt = float(meta.get("dt_s", 0.02))
    fence = GeofenceSpec.from_dict(_loads(meta.get("geofence"), None)) if meta.get("geofence") else None
    ssc_cfg = SscConfig.from_dict(_loads(meta.get("ssc"), {}))
    rj = _loads(meta.get("rejoin"), {})
    spec = RejoinSpec.from_dict(rj) if rj else RejoinSpec()
    wing0 = _loads(meta.get("wing0"), None)

    fence_changes = {}
    for r in trace.signal("GEOFENCE"):
        if r.payload.get("accepted"):
            fence_changes[r.frame] = GeofenceSpec.from_dict(_loads(r.payload["geofence"], None))

    min_d = math.inf
    max_pen = 0.0
    trail = JetWashTrail(ssc_cfg.jec_window, capacity=int(ssc_cfg.jec_window / dt) + 8)
    prev_aisl = None
    timer = RejoinTimer()
    counts = {name: 0 for name in SSC_NAMES}
    tripped = False
    wing_p = wing0
    for k in range(n):
        recs = by_frame.get(k, {})
        if k in fence_changes:
            fence = fence_changes[k]
        lead_p = recs.get("LEAD")
        if wing_p is not None and fence is not None:
            pen = float(max_penetration(fence, np.array([[wing_p["E"], wing_p["N"], wing_p["U"]]]))[0])
            max_pen = max(max_pen, pen)
        if lead_p is not None and wing_p is not None:
            lead, wing = _state(lead_p, k * dt), _state(wing_p, k * dt)
            min_d = min(min_d, math.dist(lead.position, wing.position))
            trail.push(k * dt, lead.E, lead.N, lead.U)
            counts["TNSC"] += not check_tnsc(lead, wing, ssc_cfg).ok
            counts["AFSC"] += not check_afsc(lead, wing, ssc_cfg).ok
            counts["SFC"] += not check_sfc(lead, wing, prev_aisl, dt, ssc_cfg).ok
            counts["JEC"] += not check_jec(trail, wing, ssc_cfg).ok
            prev_aisl = aisl(lead, wing)
            timer = update_success(timer, wing, rejoin_point(lead, spec), spec, dt)

        w8 = recs.get("W8")
        if w8 is not None:
            if w8.get("tripped") and not tripped:
                rep.epm_trips.append((k * dt, w8.get("reason") or ""))
            tripped = bool(w8.get("tripped"))
        if (recs.get("W7") or {}).get("status") == "intervening":
            rep.interventions += 1
        if (recs.get("W7") or {}).get("fault"):
            rep.rta_faults += 1
        if (recs.get("W3") or {}).get("source") == "PILOT":
            rep.pilot_frames += 1
        wing_p = recs.get("W4")

    rep.h1_min_distance_ft = min_d if math.isfinite(min_d) else math.nan
    rep.h3_max_penetration_ft = max_pen if fence is not None else math.nan
    rep.ssc_violations = counts
    rep.rejoin_succeeded = timer.succeeded
    rep.rejoin_time_s = timer.t_first_success
    return rep
