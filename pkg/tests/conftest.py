import numpy as np
import pytest

from galerkinlab.ladder import manufactured_problem, run_ladder
from galerkinlab.solver import SolverConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_ladder():
    """Manufactured ladder 32..64 evaluated on a 128 grid (about 2 s)."""
    cfg = SolverConfig(nu=0.01, dt=1e-3)
    return run_ladder([32, 36, 48, 54, 64], cfg, manufactured_problem(128))
