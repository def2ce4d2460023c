import numpy as np
import pytest

from gapcheck.models import ProposalParams, benchmark_1d

ACCEPTANCE_LINES = []


@pytest.fixture
def bench():
    """1-D benchmark: A = [[1]], sigma = 1, v = 0."""
    return benchmark_1d()


@pytest.fixture
def q_std():
    """q = N(0, 1)."""
    return ProposalParams([0.0], [0.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
