import time

import numpy as np
import pytest

ACCEPTANCE_LINES = []
SUITE_BUDGET_S = 120.0
_START = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_sessionstart(session):
    _START["t"] = time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    # the whole-suite time bound is only known once every test has run
    if not ACCEPTANCE_LINES:
        return
    elapsed = time.perf_counter() - _START["t"]
    ok = elapsed < SUITE_BUDGET_S
    ACCEPTANCE_LINES.append(
        f"[{'PASS' if ok else 'FAIL'}] criterion 11c: full suite wall time {elapsed:.1f} s (< {SUITE_BUDGET_S:.0f} s)"
    )
    if not ok and session.exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
