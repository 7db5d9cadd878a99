import numpy as np
import pytest

from fibermem.geometry import SurfaceMesh


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def unit_square_mesh() -> SurfaceMesh:
    """Single flat 1 x 1 element in the z = 0 plane."""
    nodes = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)]
    elements = [(0, 1, 2, 3)]
    return SurfaceMesh(nodes, elements,
                       boundary_edges={"left": [(0, 3)], "right": [(0, 1)],
                                       "bottom": [(0, 0)], "top": [(0, 2)]},
                       node_sets={"left": [0, 3], "right": [1, 2]})
