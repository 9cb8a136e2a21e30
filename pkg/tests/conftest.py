import functools

import pytest

from formation_rta.sim import bundled_scenarios, load_scenario, run

SCENARIOS = bundled_scenarios()

# nodeid -> one-line result detail, filled by acceptance tests
_DETAILS: dict[str, str] = {}


@functools.lru_cache(maxsize=None)
def cached_run(name: str, seed: int | None = None):
    """(config, trace, report) for a bundled scenario; each one simulates once per session."""
    cfg = load_scenario(SCENARIOS[name])
    trace, report = run(cfg, seed=seed)
    return cfg, trace, report


@pytest.fixture
def scenario_run():
    return cached_run


@pytest.fixture
def note(request):
    """Attach the measured values to an acceptance line."""
    def _note(text: str) -> None:
        _DETAILS[request.node.nodeid] = text
        print(text)
    return _note


def pytest_terminal_summary(terminalreporter):
    outcomes: dict[str, str] = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            if rep.when == "call" or rep.outcome != "passed":
                outcomes[nodeid] = "PASS" if rep.outcome == "passed" else "FAIL"
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(outcomes):
        name = nodeid.split("::")[-1]
        terminalreporter.write_line(f"{outcomes[nodeid]}  {name}  {_DETAILS.get(nodeid, '')}")
