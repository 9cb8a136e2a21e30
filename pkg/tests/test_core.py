import math
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from formation_rta.core import (
    KT_TO_FPS,
    AircraftState,
    ConfigError,
    ContingencyKind,
    ContingencyTable,
    ReportLimits,
    UndefinedAngleError,
    ValidationFailureKind,
    aisl,
    aspect_angle,
    compass_heading,
    heading_from_compass,
    heading_vector,
    report_from_state,
    select_contingency,
    validate_report,
    wrap_180,
    wrap_360,
)

NORTH = heading_from_compass(0.0)   # frame angle of a northbound aircraft
coord = st.floats(-1e5, 1e5, allow_nan=False)
angle = st.floats(-720, 720, allow_nan=False)


def at(E, N, U=10000.0, psi=NORTH, v=300.0):
    return AircraftState.level(E, N, U, psi, v)


def report_at(E, N, U, t, **kw):
    return replace(report_from_state(replace(at(E, N, U), t=t)), **kw)


# ---- conventions

def test_knots_factor():
    assert KT_TO_FPS == 1.68781


@given(angle)
def test_wrap_ranges(a):
    assert 0.0 <= wrap_360(a) < 360.0
    assert -180.0 < wrap_180(a) <= 180.0
    assert math.isclose(math.cos(math.radians(wrap_180(a))), math.cos(math.radians(a)), abs_tol=1e-9)


def test_heading_frame():
    # psi is counterclockwise from East
    assert heading_vector(0.0) == pytest.approx((1.0, 0.0))
    assert heading_vector(90.0) == pytest.approx((0.0, 1.0), abs=1e-12)
    assert compass_heading(90.0) == 0.0
    assert compass_heading(0.0) == 90.0
    assert heading_from_compass(270.0) == 180.0


@given(st.floats(0, 359.999))
def test_compass_round_trip(c):
    assert compass_heading(heading_from_compass(c)) == pytest.approx(c, abs=1e-9)


def test_level_state_velocity_matches_heading():
    s = at(0, 0, psi=NORTH, v=300.0)
    assert s.vE == pytest.approx(0.0, abs=1e-9)
    assert s.vN == pytest.approx(300 * KT_TO_FPS)


# ---- AISL and aspect angle

def test_aisl_examples():
    assert aisl(at(0, 0, 10000), at(300, 400, 8000)) == 500
    assert aisl(at(5, 5), at(5, 5, 0)) == 0
    assert aisl(at(100, 0), at(-100, 0)) == 200


@given(coord, coord, coord, coord, coord, coord, st.floats(-1e4, 1e4))
def test_aisl_symmetric_translation_invariant(e1, n1, e2, n2, dE, dN, dU):
    a, b = at(e1, n1), at(e2, n2, 3000.0)
    assert aisl(a, b) == aisl(b, a)
    moved = aisl(at(e1 + dE, n1 + dN, 10000 + dU), at(e2 + dE, n2 + dN, 3000.0 - dU))
    assert moved == pytest.approx(aisl(a, b), rel=1e-9, abs=1e-6)


def test_aspect_angle_examples():
    lead = at(0, 0)
    assert aspect_angle(lead, at(0, -1000)) == pytest.approx(0.0, abs=1e-12)
    assert aspect_angle(lead, at(1000, 0)) == pytest.approx(90.0)    # starboard positive
    assert aspect_angle(lead, at(-1000, 0)) == pytest.approx(-90.0)
    assert aspect_angle(lead, at(0, 1000)) == pytest.approx(180.0)


def test_aspect_angle_undefined_when_coincident():
    with pytest.raises(UndefinedAngleError):
        aspect_angle(at(1, 2), at(1, 2, 0))


@given(st.floats(0, 360), st.floats(1.0, 1e4), coord, coord)
def test_aspect_zero_on_tail_ray(psi, r, E, N):
    lead = AircraftState.level(E, N, 10000, psi, 300)
    tE, tN = heading_vector(psi + 180.0)
    theta = aspect_angle(lead, at(E + r * tE, N + r * tN))
    assert abs(theta) < 1e-6 or abs(abs(theta) - 360) < 1e-6


# ---- report validation

LIMITS = ReportLimits()


def test_position_jump_within_bound_is_valid():
    prev = report_at(50, 0, 10000, 0.0)
    cur = report_at(0, 0, 10000, 0.1)
    assert 600 * 1.68781 * 0.1 == pytest.approx(101.27, abs=0.01)
    res = validate_report(cur, [prev], LIMITS)
    assert res.verdicts["position"].valid


def test_position_jump_over_bound_is_invalid():
    prev = report_at(0, 0, 10000, 0.0)
    cur = report_at(102, 0, 10000, 0.1)
    res = validate_report(cur, [prev], LIMITS)
    assert not res.verdicts["position"].valid
    assert res.failure_kind() is ValidationFailureKind.INVALID_LEAD_POSITION


def test_repeated_timestamp_invalidates_whole_report():
    r = report_at(0, 0, 10000, 1.0)
    res = validate_report(r, [r], LIMITS)
    assert not res.valid
    assert all(not v.valid for v in res.verdicts.values())
    assert res.verdicts["timestamp"].reason == "non-monotonic timestamp"
    assert res.failure_kind() is ValidationFailureKind.NON_MONOTONIC_TIMESTAMP


def test_negative_fuel_only_flags_fuel():
    res = validate_report(report_at(0, 0, 10000, 0.0, fuel_remaining=-50.0), [], LIMITS)
    assert res.invalid_fields() == ["fuel_remaining"]
    assert res.usable and not res.valid
    assert res.failure_kind() is ValidationFailureKind.INVALID_AUXILIARY


@pytest.mark.parametrize("field,value,kind", [
    ("position", (math.nan, 0.0, 10000.0), ValidationFailureKind.INVALID_LEAD_POSITION),
    ("orientation", (0.0, 0.0, 400.0), ValidationFailureKind.INVALID_ORIENTATION),
    ("velocities", (2000.0, 0.0, 0.0), ValidationFailureKind.INVALID_VELOCITY),
    ("tas", 700.0, ValidationFailureKind.INVALID_VELOCITY),
    ("pla", 140.0, ValidationFailureKind.INVALID_AUXILIARY),
    ("wind", (math.inf, 0.0), ValidationFailureKind.INVALID_AUXILIARY),
])
def test_field_faults(field, value, kind):
    r = report_at(0, 0, 10000, 0.0).with_field(field, value)
    res = validate_report(r, [], LIMITS)
    assert res.invalid_fields() == [field]
    assert res.failure_kind() is kind


def test_sender_flag_marks_field_invalid():
    r = report_at(0, 0, 10000, 0.0, invalid_flags={"cas": "pitot heat fail"})
    res = validate_report(r, [], LIMITS)
    assert res.invalid_fields() == ["cas"]
    assert "pitot" in res.verdicts["cas"].reason


def test_stale_orientation():
    prev = report_at(0, 0, 10000, 0.0, orientation_rates=(5.0, 0.0, 0.0))
    cur = report_at(5, 0, 10000, 0.02, orientation_rates=(5.0, 0.0, 0.0))
    res = validate_report(cur, [prev], LIMITS)
    assert res.failure_kind() is ValidationFailureKind.STALE_ORIENTATION


def test_with_field_rejects_unknown_name():
    with pytest.raises(KeyError):
        report_at(0, 0, 10000, 0.0).with_field("altitude", 1.0)


def test_validation_never_raises_on_garbage():
    r = report_at(0, 0, 10000, 0.0).with_field("position", ("a", None))
    res = validate_report(r, [], LIMITS)
    assert not res.verdicts["position"].valid


@settings(max_examples=50)
@given(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4), st.floats(0.001, 1.0))
def test_validation_is_deterministic(dE, dN, dt):
    prev = report_at(0, 0, 10000, 0.0)
    cur = report_at(dE, dN, 10000, dt)
    assert validate_report(cur, [prev], LIMITS) == validate_report(cur, [prev], LIMITS)


# ---- contingencies

def test_default_contingency_table():
    table = ContingencyTable.default()
    assert select_contingency(ValidationFailureKind.LEAD_REPORT_DROPOUT, table).kind \
        is ContingencyKind.MAINTAIN_CURRENT_PATH
    assert select_contingency(ValidationFailureKind.INVALID_LEAD_POSITION, table).kind \
        is ContingencyKind.TERMINATE_TO_PILOT
    assert select_contingency(ValidationFailureKind.STALE_ORIENTATION, table).kind \
        is ContingencyKind.LOITER
    assert set(table) == set(ValidationFailureKind)


def test_contingency_table_overrides_and_errors():
    table = ContingencyTable.from_dict({"LeadReportDropout": {"plan": "Loiter", "loiter_radius_ft": 2000}})
    plan = select_contingency(ValidationFailureKind.LEAD_REPORT_DROPOUT, table)
    assert plan.kind is ContingencyKind.LOITER and plan.loiter_radius_ft == 2000
    with pytest.raises(ConfigError):
        ContingencyTable.from_dict({"Bogus": {"plan": "Loiter"}})
    with pytest.raises(ConfigError):
        ContingencyTable.from_dict({"LeadReportDropout": {"plan": "FlyToPoint"}})
