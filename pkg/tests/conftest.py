import numpy as np
import pytest

from ues.costs import QuadSinSq, ShiftedQuadratic
from ues.graph import laplacian, preset

# Acceptance verdict lines, filled by tests/test_acceptance.py.
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def circ():
    return laplacian(preset("circulant5"))


@pytest.fixture(scope="session")
def ring_pair():
    return laplacian(preset("ring5"))


@pytest.fixture
def static_cost():
    return QuadSinSq()


@pytest.fixture
def moving_cost():
    return ShiftedQuadratic()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
