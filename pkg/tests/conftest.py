import numpy as np
import pytest

# Verdict lines collected by the acceptance tests; echoed after the run so
# they survive pytest's fd-level capture.
acceptance_lines = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
