"""Per-frame trace records and their CSV/JSON serialization.

A trace is a flat CSV with columns ``frame, t_s, signal, field, value``: one
row per payload field.  Consecutive rows sharing (frame, signal) form one
record.  Frame -1 carries scenario metadata (signal ``SCENARIO``).  A sidecar
``<name>.meta.json`` holds the config hash, seed and code version.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

# Recorded every frame, in this order (W1 < W2 < W3 < W4).
LIVE_SIGNALS = (
    "RPT", "W9", "W12", "W16", "W13", "W1", "W2", "W7", "W17",
    "W6", "W8", "W5", "W3", "W14", "W4", "LEAD", "BARRIER", "SSC", "REJOIN",
)
# Voice links and NNCS settings have no model; they never produce rows.
ABSENT_SIGNALS = ("W10", "W11", "W15")
EVENT_SIGNALS = ("SCENARIO", "GEOFENCE")

PRODUCERS = {
    "RPT": "core", "W9": "selector", "W12": "sim", "W16": "mission", "W13": "mission",
    "W1": "mission", "W2": "rta", "W7": "rta", "W17": "rta", "W6": "epm", "W8": "epm",
    "W5": "selector", "W3": "selector", "W14": "selector", "W4": "dynamics",
    "LEAD": "dynamics", "BARRIER": "rta", "SSC": "ssc", "REJOIN": "mission",
    "SCENARIO": "sim", "GEOFENCE": "sim",
}

HEADER = ("frame", "t_s", "signal", "field", "value")


def fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    return str(value)


def parse_value(text: str) -> Any:
    if text == "":
        return None
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return float(text)
    except ValueError:
        return text


def normalize(value: Any) -> Any:
    """The value a payload entry takes after a write/read round trip."""
    if isinstance(value, enum.Enum):
        value = value.value
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, (int, float, np.integer, np.floating)):
        return float(f"{float(value):.9g}")
    if isinstance(value, (dict, list, tuple)):
        return json.dumps(value, sort_keys=True, separators=(",", ":"))
    return str(value)


@dataclass(frozen=True)
class TraceRecord:
    frame: int
    t: float
    signal: str
    payload: Mapping[str, Any]
    producer: str = ""


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, frame: int, t: float, signal: str, payload: Mapping[str, Any]) -> None:
        clean = {k: normalize(v) for k, v in payload.items()}
        self.records.append(TraceRecord(frame, float(f"{t:.9g}"), signal, clean,
                                        PRODUCERS.get(signal, "")))

    def signal(self, name: str) -> list[TraceRecord]:
        return [r for r in self.records if r.signal == name]

    def scenario(self) -> dict:
        for r in self.records:
            if r.signal == "SCENARIO":
                return dict(r.payload)
        return {}

    def column(self, name: str, fields: Iterable[str]) -> tuple[np.ndarray, np.ndarray]:
        """(frames, values) for one signal; values has one column per field."""
        recs = self.signal(name)
        fields = list(fields)
        frames = np.array([r.frame for r in recs], dtype=int)
        vals = np.array([[_num(r.payload.get(f)) for f in fields] for r in recs], dtype=float)
        return frames, vals.reshape(len(recs), len(fields))


def _num(v) -> float:
    if v is None or isinstance(v, str):
        return math.nan
    return float(v)


class TraceParseError(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


def write_trace(trace: Trace, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r in trace.records:
            frame, t = str(r.frame), fmt(r.t)
            for k, v in r.payload.items():
                w.writerow((frame, t, r.signal, k, fmt(v)))
    if trace.meta:
        meta_path(path).write_text(json.dumps(trace.meta, indent=2, sort_keys=True) + "\n")
    return path


def meta_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def read_trace(path: str | Path) -> Trace:
    path = Path(path)
    records: list[TraceRecord] = []
    key = None
    payload: dict = {}
    t_cur = 0.0
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1:
                if tuple(row) != HEADER:
                    raise TraceParseError(1, f"expected header {','.join(HEADER)}")
                continue
            if len(row) != 5:
                raise TraceParseError(lineno, f"expected 5 columns, got {len(row)}")
            frame_s, t_s, signal, name, value = row
            try:
                frame = int(frame_s)
            except ValueError:
                raise TraceParseError(lineno, f"frame {frame_s!r} is not an integer") from None
            try:
                t = float(t_s)
            except ValueError:
                raise TraceParseError(lineno, f"time {t_s!r} is not a number") from None
            if not signal or not name:
                raise TraceParseError(lineno, "empty signal or field name")
            if (frame, signal) != key:
                if key is not None:
                    records.append(TraceRecord(key[0], t_cur, key[1], payload, PRODUCERS.get(key[1], "")))
                key, payload, t_cur = (frame, signal), {}, t
            payload[name] = parse_value(value)
    if key is not None:
        records.append(TraceRecord(key[0], t_cur, key[1], payload, PRODUCERS.get(key[1], "")))
    meta = {}
    mp = meta_path(path)
    if mp.exists():
        meta = json.loads(mp.read_text())
    return Trace(records, meta)
