import numpy as np
import pytest
from hypothesis import settings

from twoscale.coupled import Problem, run_simulation
from twoscale.grids import MacroGrid, MicroGrid

settings.register_profile("numerics", deadline=None, max_examples=50)
settings.load_profile("numerics")

COSINE = {"preset": "cosine", "base": 1.0, "amplitude": 0.5}


@pytest.fixture(scope="session")
def ref_problem():
    """n_x = 8, n_y = 9, T = 0.2, dt = 0.01, alpha = beta = 1/2."""
    return Problem(MacroGrid(8), MicroGrid(9))


@pytest.fixture(scope="session")
def ref_traj(ref_problem):
    return run_simulation(ref_problem, COSINE, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
