import numpy as np
import pytest

ACCEPTANCE_LINES = []


def record_acceptance(number, name, passed, detail, seconds, limit):
    """Store one acceptance line; printed in the terminal summary."""
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(
        f"criterion {number} [{status}] {name}: {detail} ({seconds:.1f} s, limit {limit:.0f} s)"
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
