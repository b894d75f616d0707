import numpy as np
import pytest
from hypothesis import settings

from nehari_fs.model import GammaWeight, Potential, Problem, constant, parse_potential, power_nonlinearity, trig
from nehari_fs.torus_spectral import Field, TorusGrid

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def make_problem(L=40, M=64, alpha=2.0, V="const:1", V_loc=None, gamma=0.0, q=3.0, p=4.0, dim=1, center=None):
    grid = TorusGrid(dim, L, M)
    pot = parse_potential(V, V_loc, center) if isinstance(V, str) else V
    g = gamma if not isinstance(gamma, (int, float)) else constant(float(gamma))
    return Problem(grid, alpha, pot, GammaWeight(g, q), power_nonlinearity(p))


def sech_soliton(grid, x0=None):
    x0 = grid.side_length / 2 if x0 is None else x0
    return Field.from_function(grid, lambda x: np.sqrt(2.0) / np.cosh(x[0] - x0))


@pytest.fixture(scope="session")
def soliton_problem():
    return make_problem()


@pytest.fixture(scope="session")
def small_problem():
    """Cheap 1D problem with a non-constant periodic potential and Gamma = 1."""
    return make_problem(L=16, M=16, alpha=1.5, V="cos:c=2,a=1", gamma=1.0, q=3.0, p=4.0)


@pytest.fixture(scope="session")
def well_problem():
    return make_problem(L=24, M=16, alpha=1.0, V="const:1", V_loc="gauss:amp=-0.3,width=1", q=2.5, p=3.0)


@pytest.fixture(scope="session")
def plane_problem():
    return make_problem(L=8, M=8, alpha=1.5, V="cos:c=2,a=0.5", gamma=0.5, q=2.5, p=3.0, dim=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
