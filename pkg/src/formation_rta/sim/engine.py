"""Fixed-timestep frame loop wiring the policy, filter, monitor and selector."""

from __future__ import annotations

from dataclasses import fields, replace

import numpy as np

from .. import __version__
from ..core import (KT_TO_FPS, ContingencyKind, aisl, ValidationFailureKind, report_from_state, select_contingency,
                    validate_report)
from ..dynamics import advance_lead, step
from ..epm import EpmStatus, Source, check, reengage
from ..mission import (POLICIES, RejoinTimer, contingency_velocity, extrapolate, lead_from_report,
                       loiter_center, rejoin_point, update_success)
from ..rta import (FilterResult, RtaFault, build_constraints, collision_terms, fence_terms,
                   realize_min_speed)
from ..rta import filter as rta_filter
from ..selector import (PilotPolicy, SelectorState, map_velocity_to_command, pilot_velocity_loose,
                        racetrack_command, select)
from ..ssc import JetWashTrail, check_afsc, check_jec, check_sfc, check_tnsc
from .config import FaultKind, ScenarioConfig, with_seed
from .rng import substream
from .trace import ABSENT_SIGNALS, LIVE_SIGNALS, PRODUCERS, Trace
from .verify import VerifierReport, verify_trace

_HISTORY = 8


def _trip_text(reason) -> str:
    if reason is None:
        return ""
    if isinstance(reason, tuple):
        name, value, limit = reason
        return f"{name}={value:.6g} limit {limit:g}"
    return str(reason)


def _cmd_payload(cmd) -> dict:
    return {"pitch_cmd": cmd.pitch_cmd, "roll_cmd": cmd.roll_cmd, "speed_cmd": cmd.speed_cmd,
            "yaw_cmd": cmd.yaw_cmd, "roll_mode": cmd.roll_mode.value}


def _state_payload(s) -> dict:
    return {"t_state": s.t, "E": s.E, "N": s.N, "U": s.U, "psi": s.psi, "phi": s.phi,
            "v_true": s.v_true, "vE": s.vE, "vN": s.vN, "vU": s.vU}


def scenario_record(cfg: ScenarioConfig) -> dict:
    return {
        "name": cfg.name,
        "dt_s": cfg.dt,
        "n_frames": cfg.n_frames,
        "rho_c_ft": cfg.rho_c,
        "rho_c_filter_ft": cfg.rho_c_filter,
        "hard_tolerance_ft": cfg.hard_tolerance_ft,
        "geofence": cfg.geofence.to_dict(),
        "ssc": {f.name: getattr(cfg.ssc, f.name) for f in fields(cfg.ssc)},
        "rejoin": {"theta_AA_deg": cfg.rejoin.theta_AA, "rho_r_ft": cfg.rejoin.rho_r,
                   "rho_e_ft": cfg.rejoin.rho_e, "t_success_s": cfg.rejoin.t_success},
        "wing0": _state_payload(cfg.wing0),
        "live_signals": "|".join(LIVE_SIGNALS),
        "absent_signals": "|".join(ABSENT_SIGNALS),
    }


def trace_meta(cfg: ScenarioConfig) -> dict:
    return {
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "code_version": __version__,
        "scenario": cfg.name,
        "producers": dict(PRODUCERS),
    }


def run(config: ScenarioConfig, seed: int | None = None) -> tuple[Trace, VerifierReport]:
    """Simulate one episode; the report is recomputed from the finished trace."""
    cfg = config if seed is None else with_seed(config, seed)
    trace = Trace(meta=trace_meta(cfg))
    trace.add(-1, 0.0, "SCENARIO", scenario_record(cfg))

    dt = cfg.dt
    af = cfg.airframe
    box = cfg.rta_model
    policy = POLICIES[cfg.policy]
    fault_rngs = {i: substream(cfg.seed, "fault_noise", i) for i, ev in enumerate(cfg.faults)
                  if ev.kind is FaultKind.GPS_NOISE}
    budget = cfg.frame_budget_fraction * dt if cfg.enforce_frame_budget else None
    rta_on = cfg.collision_enabled or cfg.geofence_enabled
    v_min_fps = af.speed_range[0] * KT_TO_FPS

    lead, wing = cfg.lead0, cfg.wing0
    prev_lead = None
    geofence = cfg.geofence
    pending_changes = list(cfg.geofence_changes)

    history: list = []
    last_good = None
    last_sent_ts = None
    misses = 0
    contingency = None
    contingency_frame = 0
    anchor = None

    epm_status = EpmStatus()
    sel = SelectorState(source=Source.NNCS_RTA)
    pending_reengage = False
    was_in_window = False

    timer = RejoinTimer()
    trail = JetWashTrail(cfg.ssc.jec_window, capacity=int(cfg.ssc.jec_window / dt) + 8)
    prev_aisl = None

    for k in range(cfg.n_frames):
        t = k * dt
        if k > 0:
            prev_lead = lead
            lead = advance_lead(cfg.lead_script, lead, dt, af)

        # runtime geofence changes (accepted only under pilot control, wingman inside)
        while pending_changes and pending_changes[0][0] <= t + 1e-9:
            tc, spec = pending_changes.pop(0)
            h, _ = fence_terms(spec, np.array([wing.position]))
            inside = bool(h.min() >= 0)
            accepted = sel.source is Source.PILOT and inside
            reason = "" if accepted else ("source is NNCS_RTA" if sel.source is not Source.PILOT
                                          else "wingman outside new fence")
            if accepted:
                geofence = spec
            trace.add(k, t, "GEOFENCE", {"t_request": tc, "accepted": accepted, "reason": reason,
                                         "geofence": spec.to_dict()})

        # ---- lead report through the fault schedule
        report = report_from_state(lead, prev=prev_lead, dt=dt if prev_lead else None)
        active = [(i, ev) for i, ev in enumerate(cfg.faults) if ev.active(t)]
        injected = []
        for i, ev in active:
            if ev.target != "lead_report" or report is None:
                continue
            if ev.kind is FaultKind.LEAD_REPORT_DROPOUT:
                report = None
            elif ev.kind is FaultKind.FIELD_CORRUPTION:
                report = report.with_field(ev.field, ev.value)
            elif ev.kind is FaultKind.STALE_TIMESTAMP and last_sent_ts is not None:
                report = replace(report, timestamp=last_sent_ts)
            elif ev.kind is FaultKind.GPS_NOISE:
                noise = fault_rngs[i].normal(0.0, ev.sigma_ft, 3)
                report = replace(report, position=tuple(float(p + n) for p, n in zip(report.position, noise)))
            injected.append(ev.kind.value)
        if report is not None and not any(ev.kind is FaultKind.STALE_TIMESTAMP for _, ev in active):
            last_sent_ts = report.timestamp

        if report is None:
            usable, valid, kind, bad = False, False, ValidationFailureKind.LEAD_REPORT_DROPOUT, []
        else:
            res = validate_report(report, history, cfg.report_limits)
            usable, valid, bad = res.usable, res.valid, res.invalid_fields()
            kind = None if usable else res.failure_kind()
        if usable:
            history = (history + [report])[-_HISTORY:]
            last_good = report
            misses = 0
            # handing the aircraft to the pilot is not undone by a good report
            if contingency is None or contingency.kind is not ContingencyKind.TERMINATE_TO_PILOT:
                contingency = None
                anchor = None
        else:
            misses += 1
            if misses >= cfg.staleness_frames and contingency is None:
                contingency = select_contingency(kind, cfg.contingencies)
                contingency_frame = k
                if contingency.kind is ContingencyKind.LOITER:
                    anchor = loiter_center(wing, contingency.loiter_radius_ft)
        trace.add(k, t, "RPT", {
            "present": report is not None, "usable": usable, "valid": valid,
            "failure": kind.value if kind else "", "invalid_fields": "|".join(bad),
            "misses": misses, "injected": "|".join(injected),
            "contingency": contingency.kind.value if contingency else "",
            "E": report.position[0] if report else None,
            "N": report.position[1] if report else None,
            "U": report.position[2] if report else None,
        })

        est = extrapolate(last_good, lead.t) if last_good is not None else None
        age = (lead.t - last_good.timestamp) if last_good is not None else float("inf")

        # ---- pilot switch request (W9) and operator settings (W12)
        in_window = any(t0 <= t + 1e-9 < t1 for t0, t1 in cfg.pilot_takeovers)
        if was_in_window and not in_window:
            pending_reengage = True
        was_in_window = in_window
        terminate = (contingency is not None and contingency.kind is ContingencyKind.TERMINATE_TO_PILOT
                     and k - contingency_frame >= cfg.pilot.reaction_delay)
        takeover = in_window or terminate
        trace.add(k, t, "W9", {"takeover": takeover,
                               "reason": "scheduled" if in_window else ("contingency" if terminate else "")})
        trace.add(k, t, "W12", {"collision_enabled": cfg.collision_enabled,
                                "geofence_enabled": cfg.geofence_enabled,
                                "rho_c_ft": cfg.rho_c, "rho_c_filter_ft": cfg.rho_c_filter,
                                "gamma_collision": cfg.gains.collision,
                                "gamma_geofence": cfg.gains.geofence})

        # ---- NNCS (W1)
        nncs_fault = ""
        if contingency is not None:
            mode = "contingency"
            u_des = contingency_velocity(contingency, wing, anchor, box)
        elif est is None:
            mode = "awaiting lead"
            u_des = box.clip([wing.vE, wing.vN, 0.0])
        else:
            mode = "nominal"
            u_des = np.asarray(policy(wing, est, cfg.rejoin, box), dtype=float)
        if not np.all(np.isfinite(u_des)):
            nncs_fault = "non-finite output"
            u_des = box.clip([wing.vE, wing.vN, 0.0])
        trace.add(k, t, "W16", {
            "lead_E": est.position[0] if est else None, "lead_N": est.position[1] if est else None,
            "lead_U": est.position[2] if est else None, "lead_age_s": age if est else None,
            "wing_E": wing.E, "wing_N": wing.N, "wing_U": wing.U,
            "uE": u_des[0], "uN": u_des[1], "uU": u_des[2],
        })
        trace.add(k, t, "W13", {"mode": mode, "plan": contingency.kind.value if contingency else "",
                                "fault": nncs_fault})
        trace.add(k, t, "W1", {"uE": u_des[0], "uN": u_des[1], "uU": u_des[2]})

        # ---- RTA (W2)
        forced = next((ev for _, ev in active if ev.kind is FaultKind.RTA_FORCED_FAULT), None)
        constraints = []
        if not rta_on:
            result = FilterResult(tuple(map(float, u_des)))
        elif forced is not None:
            result = FilterResult(None, fault=forced.rta_fault)
        elif cfg.collision_enabled and (est is None or age > cfg.max_input_age_s):
            result = FilterResult(None, fault=RtaFault.BAD_INPUT)
        else:
            try:
                lead_est = lead_from_report(est) if est is not None else lead
                constraints = build_constraints(lead_est, wing, geofence, cfg.rho_c_filter, cfg.gains,
                                                collision=cfg.collision_enabled,
                                                fence=cfg.geofence_enabled)
            except ValueError:
                result = FilterResult(None, fault=RtaFault.BAD_INPUT)
            else:
                qp = rta_filter(u_des, constraints, box, budget_s=budget)
                result = qp
                if qp.healthy:
                    u_real = realize_min_speed(qp.u_safe, constraints, v_min_fps)
                    if not np.array_equal(u_real, qp.u_safe):
                        result = FilterResult(tuple(map(float, u_real)), intervened=True,
                                              active_set=qp.active_set)
        dropped = any(ev.kind is FaultKind.W2_DROPOUT for _, ev in active)
        w2 = None if dropped else result
        if not rta_on:
            status = "off"
        elif result.fault is not None:
            status = "fault"
        else:
            status = "intervening" if result.intervened else "active"
        u_safe = result.u_safe or (None, None, None)
        trace.add(k, t, "W2", {
            "present": w2 is not None,
            "uE": u_safe[0] if w2 else None, "uN": u_safe[1] if w2 else None,
            "uU": u_safe[2] if w2 else None,
            "fault": result.fault.value if (w2 and result.fault) else "",
        })
        trace.add(k, t, "W7", {"status": status, "fault": result.fault.value if result.fault else ""})
        trace.add(k, t, "W17", {
            "n_constraints": len(constraints),
            "h_min": min((c.h for c in constraints), default=None),
            "intervened": result.intervened,
            "active_set": "|".join(map(str, result.active_set)),
            "u_des_E": u_des[0], "u_des_N": u_des[1], "u_des_U": u_des[2],
            "u_safe_E": u_safe[0], "u_safe_N": u_safe[1], "u_safe_U": u_safe[2],
        })

        # ---- EPM (W6, W8)
        if pending_reengage:
            epm_status = reengage(epm_status, wing, cfg.trip_limits)
            if not epm_status.tripped:
                pending_reengage = False
        epm_status = check(wing, cfg.trip_limits, pilot_takeover=takeover, prev=epm_status)
        trace.add(k, t, "W6", {"source": epm_status.selected_source.value})
        trace.add(k, t, "W8", {"engaged": epm_status.engaged, "tripped": epm_status.tripped,
                               "faulted": epm_status.faulted,
                               "reason": _trip_text(epm_status.trip_reason),
                               "refusal": epm_status.refusal or ""})

        # ---- safety pilot (W5)
        executing = (contingency is not None and contingency.kind is not ContingencyKind.TERMINATE_TO_PILOT
                     and k - contingency_frame >= cfg.pilot.reaction_delay)
        if executing:
            pilot_mode = PilotPolicy.EXECUTE_CONTINGENCY.value
            w5 = map_velocity_to_command(contingency_velocity(contingency, wing, anchor, box), wing, af)
        elif cfg.pilot.policy is PilotPolicy.FLY_RACETRACK:
            pilot_mode = PilotPolicy.FLY_RACETRACK.value
            w5 = racetrack_command(cfg.pilot, wing, af)
        else:
            pilot_mode = PilotPolicy.HOLD_FORMATION_LOOSE.value
            v = box.saturate(pilot_velocity_loose(cfg.pilot, wing, lead, cfg.rejoin.theta_AA, cfg.rejoin.rho_r))
            w5 = map_velocity_to_command(v, wing, af)
        trace.add(k, t, "W5", {**_cmd_payload(w5), "mode": pilot_mode})

        # ---- control selector (W3, W14)
        w3, sel = select(w2, w5, epm_status, sel, wing=wing, model=af)
        trace.add(k, t, "W3", {**_cmd_payload(w3), "source": sel.source.value})
        trace.add(k, t, "W14", {"alert": sel.alert_w14, "source": sel.source.value})

        # ---- airframe (W4)
        wing_next = step(wing, w3, dt, af)
        env = wing_next.env
        trace.add(k, t, "W4", {**_state_payload(wing_next),
                               **{f.name: getattr(env, f.name) for f in fields(env)}})

        # ---- monitors at the synchronized pair (lead, wing) of this frame
        trace.add(k, t, "LEAD", _state_payload(lead))
        h_c, _, _ = collision_terms(np.array([lead.position]), np.zeros((1, 3)),
                                    np.array([wing.position]), cfg.rho_c)
        h_f, _ = fence_terms(geofence, np.array([wing.position]))
        trace.add(k, t, "BARRIER", {"h_collision": float(h_c[0]), "h_fence_min": float(h_f.min())})

        trail.push(t, lead.E, lead.N, lead.U)
        tn = check_tnsc(lead, wing, cfg.ssc)
        af_ = check_afsc(lead, wing, cfg.ssc)
        sf = check_sfc(lead, wing, prev_aisl, dt, cfg.ssc)
        je = check_jec(trail, wing, cfg.ssc)
        prev_aisl = aisl(lead, wing)
        trace.add(k, t, "SSC", {"tnsc_ok": tn.ok, "tns": tn.value, "afsc_ok": af_.ok, "stack": af_.value,
                                "sfc_ok": sf.ok, "closure": sf.value, "sfc_detail": sf.detail,
                                "jec_ok": je.ok, "jec_dist": je.value})

        point = rejoin_point(lead, cfg.rejoin)
        timer = update_success(timer, wing, point, cfg.rejoin, dt)
        trace.add(k, t, "REJOIN", {"E_R": point[0], "N_R": point[1], "U_R": point[2],
                                   "distance": float(np.linalg.norm(np.subtract(wing.position, point))),
                                   "t_rejoin": timer.t_rejoin, "succeeded": timer.succeeded})

        wing = wing_next

    return trace, verify_trace(trace)
