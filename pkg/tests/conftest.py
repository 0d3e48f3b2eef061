import math

import numpy as np
import pytest

from quadperiod.surface import generate_torus, l_shape_surface, build_quad_graph


@pytest.fixture(scope="session")
def torus_i_2():
    return generate_torus(1j, 2)


@pytest.fixture(scope="session")
def torus_i_4():
    return generate_torus(1j, 4)


@pytest.fixture(scope="session")
def torus_skew_4():
    return generate_torus(0.5 + 0.8j, 4)


@pytest.fixture(scope="session")
def lshape():
    return l_shape_surface()


@pytest.fixture(scope="session")
def lshape_mesh_2(lshape):
    return build_quad_graph(lshape, 0.5)


@pytest.fixture(scope="session")
def lshape_mesh_4(lshape):
    return build_quad_graph(lshape, 0.25)


@pytest.fixture(scope="session")
def lshape_mesh_8(lshape):
    return build_quad_graph(lshape, 0.125)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(0)
