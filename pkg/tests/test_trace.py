import math

import pytest

from formation_rta.sim import Trace, TraceParseError, read_trace, verify_trace, write_trace
from formation_rta.sim.trace import LIVE_SIGNALS, fmt, meta_path, parse_value

from conftest import cached_run


@pytest.mark.parametrize("value", [0.0, -1.5, 1e-300, 123456.789, "text", True, False, None])
def test_value_round_trip(value):
    assert parse_value(fmt(value)) == value


def test_floats_keep_nine_significant_digits():
    assert fmt(123456.789012) == "123456.789"
    assert fmt(1 / 3) == "0.333333333"


def test_non_finite_round_trip():
    assert math.isnan(parse_value(fmt(math.nan)))
    assert parse_value(fmt(math.inf)) == math.inf


def test_written_trace_verifies_like_the_run(tmp_path):
    _, trace, rep = cached_run("nominal_rejoin")
    path = write_trace(trace, tmp_path / "n.trace.csv")
    assert meta_path(path).exists()
    again = verify_trace(path)
    assert again.to_dict() == rep.to_dict()


def test_written_bytes_are_stable(tmp_path):
    _, trace, _ = cached_run("nominal_rejoin")
    a = write_trace(trace, tmp_path / "a.csv").read_bytes()
    b = write_trace(read_trace(tmp_path / "a.csv"), tmp_path / "b.csv").read_bytes()
    assert a == b


def test_empty_trace_fails_completeness():
    rep = verify_trace(Trace())
    assert rep.frames == 0 and rep.c5_missing == len(LIVE_SIGNALS)
    assert rep.hard_violation


def test_missing_signal_is_counted():
    _, trace, _ = cached_run("nominal_rejoin")
    dropped = [r for r in trace.records if not (r.frame == 100 and r.signal == "W17")]
    rep = verify_trace(Trace(dropped, trace.meta))
    assert rep.c5_missing == 1 and rep.hard_violation


def test_parse_errors_name_the_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("frame,t_s,signal,field,value\n0,0,W1,uE,1\n0,zero,W1,uN,2\n")
    with pytest.raises(TraceParseError) as exc:
        read_trace(p)
    assert exc.value.line == 3 and "line 3" in str(exc.value)
    p.write_text("frame,time\n")
    with pytest.raises(TraceParseError) as exc:
        read_trace(p)
    assert exc.value.line == 1
    p.write_text("frame,t_s,signal,field,value\n0,0,W1\n")
    with pytest.raises(TraceParseError, match="5 columns"):
        read_trace(p)
