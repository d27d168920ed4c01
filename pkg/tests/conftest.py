import numpy as np
import pytest

from sonodg.mesh import build_rect_mesh, classify_boundary
from sonodg.space import DgSpace


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


@pytest.fixture
def strip_mesh():
    """The experiments' domain [0,1]x[0,2] at the coarsest useful size."""
    return build_rect_mesh((0, 1), (0, 2), 4, 8)


@pytest.fixture
def unit_mesh():
    return build_rect_mesh((0, 1), (0, 1), 4, 4)


@pytest.fixture(params=[1, 2])
def space(request, strip_mesh):
    classify_boundary(strip_mesh, (0.0, 1.0))
    return DgSpace(strip_mesh, request.param)
