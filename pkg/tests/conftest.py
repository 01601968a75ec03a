import numpy as np
import pytest

from mirt.fields import Grid3
from mirt.geometry import Curve


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid12():
    return Grid3.cube(12)


@pytest.fixture(scope="session")
def grid16():
    return Grid3.cube(16)


@pytest.fixture(scope="session")
def helix():
    return Curve("helix", turns=3)


@pytest.fixture(scope="session")
def circle():
    return Curve("circle")


def random_symmetric_free(rng, xi):
    """Random 3x3 tensor with ``xi^i f_ij = 0`` and zero trace."""
    from mirt.fields import sol_projector
    return (sol_projector(xi) @ rng.standard_normal(9)).reshape(3, 3)
