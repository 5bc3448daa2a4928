import numpy as np
import pytest

# (criterion, passed, detail) rows filled by test_acceptance.py
ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one acceptance line; shown again in the terminal summary."""

    def _record(criterion, passed, detail):
        ACCEPTANCE_LINES.append((criterion, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")

    return _record


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit, ok, detail in ACCEPTANCE_LINES:
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {crit}: {detail}")
