"""Scenario engine: configuration, frame loop, trace recorder and verifier."""

from .config import (FaultEvent, FaultKind, ScenarioConfig, bundled_scenarios, load_scenario,
                     parse_scenario)
from .engine import run
from .montecarlo import MonteCarloReport, monte_carlo
from .trace import Trace, TraceParseError, TraceRecord, read_trace, write_trace
from .verify import VerifierReport, verify_trace

__all__ = [
    "FaultEvent", "FaultKind", "ScenarioConfig", "bundled_scenarios", "load_scenario", "parse_scenario", "run",
    "MonteCarloReport", "monte_carlo", "Trace", "TraceParseError", "TraceRecord",
    "read_trace", "write_trace", "VerifierReport", "verify_trace",
]
