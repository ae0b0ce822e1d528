import numpy as np
import pytest

from shapeinv.forward import ForwardSolver, PhysicsParams, default_mesh_config
from shapeinv.mesh import build_disk_mesh
from shapeinv.shape import whittle_matern_coeffs


@pytest.fixture(scope="session")
def default_params():
    return PhysicsParams()


@pytest.fixture(scope="session")
def default_mesh():
    return build_disk_mesh(default_mesh_config())


@pytest.fixture(scope="session")
def default_solver(default_mesh, default_params):
    return ForwardSolver(default_mesh, default_params)


@pytest.fixture(scope="session")
def coeffs6():
    return whittle_matern_coeffs(0.01, 0.1, 0.001, 6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
