import numpy as np
import pytest

from wkam import kernels
from wkam.grid import PeriodicGrid
from wkam.hj_solver import SolverConfig, reconstruct_momentum, solve_discounted
from wkam.model import preset

BACKENDS = sorted(kernels.BACKENDS)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def f1():
    return preset("F1")


@pytest.fixture(scope="session")
def f2():
    return preset("F2")


@pytest.fixture(scope="session")
def accurate():
    return SolverConfig(dt=0.005, xi_max=4.0, scheme="taylor2", tol=1e-10)


@pytest.fixture(scope="session")
def f1_solved(f1, accurate):
    """F1, c = 0, eps = 0.02 on 2048 nodes with its momentum field."""
    grid = PeriodicGrid.uniform(2048)
    field, _, _ = solve_discounted(f1, 0.0, 0.02, 0.0, grid, accurate)
    return field, reconstruct_momentum(field, f1, 0.0, 0.02, 0.0, accurate)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
