import time

import pytest

from flockcontain.engine import run
from flockcontain.scenarios import experiment_scenario

_ACCEPTANCE_LINES = []


def record_acceptance(line: str):
    """Collect one pass/fail line for the terminal summary."""
    _ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.fixture(scope="session")
def experiment_run():
    """The 13-agent containment run over 20 s, shared across test files."""
    t0 = time.perf_counter()
    rec = run(experiment_scenario())
    return rec, time.perf_counter() - t0


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
