import dataclasses
import time

import pytest

from thermistor.config_io import reference_config
from thermistor.coupler import run_simulation

# acceptance outcome lines, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []
# wall-clock seconds of session-scoped runs, keyed by fixture name
TIMINGS: dict[str, float] = {}


@pytest.fixture(scope="session")
def reference_run():
    """The shipped 1D benchmark (nx=41, dt=1e-3, T=1), every state kept."""
    cfg = dataclasses.replace(reference_config(), figures=False, keep_states=True)
    t0 = time.perf_counter()
    res = run_simulation(cfg)
    TIMINGS["reference_run"] = time.perf_counter() - t0
    return res


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
