"""Full-pipeline Monte Carlo over randomized initial geometry."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..core import AircraftState
from ..dynamics import trimmed
from ..rta import collision_terms, fence_terms
from .config import ScenarioConfig
from .engine import run
from .rng import substream
from .verify import VerifierReport


@dataclass
class MonteCarloReport:
    n: int
    seed: int
    hard_violations: int
    h1_violations: int
    h3_violations: int
    c5_missing: int
    min_h1_margin_ft: float
    max_h3_penetration_ft: float
    intervention_rate: float
    rejoin_successes: int
    reports: list[VerifierReport] = field(default_factory=list, repr=False)

    @property
    def violation_rate(self) -> float:
        return self.hard_violations / self.n

    def rows(self) -> list[tuple[str, str]]:
        return [
            ("episodes", str(self.n)), ("seed", str(self.seed)),
            ("hard_violations", str(self.hard_violations)),
            ("violation_rate", f"{self.violation_rate:.9g}"),
            ("h1_violations", str(self.h1_violations)), ("h3_violations", str(self.h3_violations)),
            ("c5_missing", str(self.c5_missing)),
            ("min_h1_margin_ft", f"{self.min_h1_margin_ft:.9g}"),
            ("max_h3_penetration_ft", f"{self.max_h3_penetration_ft:.9g}"),
            ("intervention_rate", f"{self.intervention_rate:.9g}"),
            ("rejoin_successes", str(self.rejoin_successes)),
        ]


def episode_config(template: ScenarioConfig, seed: int, index: int,
                   range_ft: tuple[float, float] = (2000.0, 8000.0),
                   max_tries: int = 100) -> ScenarioConfig:
    """Template with the wingman placed at a random valid offset from the lead."""
    rng = substream(seed, "mc_geometry", index)
    lead = template.lead0
    lo_v, hi_v = template.airframe.speed_range
    for _ in range(max_tries):
        rr = rng.uniform(*range_ft)
        bearing = rng.uniform(0.0, 2.0 * math.pi)
        dU = rng.uniform(-300.0, 300.0)
        psi = lead.psi + rng.uniform(-45.0, 45.0)
        v = float(np.clip(lead.v_true + rng.uniform(-30.0, 30.0), lo_v, hi_v))
        wing = trimmed(AircraftState.level(lead.E + rr * math.cos(bearing), lead.N + rr * math.sin(bearing),
                                           lead.U + dU, psi, v))
        h, _, _ = collision_terms(np.array([lead.position]), np.zeros((1, 3)),
                                  np.array([wing.position]), template.rho_c_filter)
        hf, _ = fence_terms(template.geofence, np.array([wing.position]))
        if h[0] >= 0 and hf.min() >= template.fence_margin_ft:
            break
    else:  # pragma: no cover - only with a degenerate template
        raise ValueError("could not place a valid wingman")
    ep_seed = int(rng.integers(0, 2**31 - 1))
    return template.with_initial(lead, wing, seed=ep_seed)


def _one(args) -> VerifierReport:
    template, seed, i = args
    return run(episode_config(template, seed, i))[1]


def aggregate(reports: list[VerifierReport], seed: int) -> MonteCarloReport:
    n = len(reports)
    return MonteCarloReport(
        n=n, seed=seed,
        hard_violations=sum(r.hard_violation for r in reports),
        h1_violations=sum(r.h1_violated for r in reports),
        h3_violations=sum(r.h3_violated for r in reports),
        c5_missing=sum(r.c5_missing for r in reports),
        min_h1_margin_ft=min(r.h1_margin_ft for r in reports),
        max_h3_penetration_ft=max(r.h3_max_penetration_ft for r in reports),
        intervention_rate=sum(r.interventions for r in reports) / max(1, sum(r.frames for r in reports)),
        rejoin_successes=sum(r.rejoin_succeeded for r in reports),
        reports=list(reports),
    )


def monte_carlo(template: ScenarioConfig, n: int, seed: int, workers: int = 1) -> MonteCarloReport:
    """``n`` independent episodes; identical output for identical (template, n, seed)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    jobs = [(template, seed, i) for i in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_one, jobs))
    else:
        reports = [_one(j) for j in jobs]
    return aggregate(reports, seed)
