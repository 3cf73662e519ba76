import numpy as np
import pytest
from scipy.spatial import Delaunay

from psspline.mesh import build_triangulation, refine_powell_sabin

ACCEPTANCE_LINES: dict[int, str] = {}


def random_square_mesh(seed: int = 7, n_inner: int = 9):
    """Delaunay mesh of the unit square corners plus ``n_inner`` interior points (2 n_inner + 2 triangles)."""
    rng = np.random.default_rng(seed)
    inner = 0.1 + 0.8 * rng.random((n_inner, 2))
    pts = np.vstack([[[0, 0], [1, 0], [1, 1], [0, 1]], inner])
    return build_triangulation(pts, Delaunay(pts).simplices)


def single_triangle():
    return build_triangulation([(0, 0), (1, 0), (0, 1)], [[0, 1, 2]])


def square_mesh():
    return build_triangulation([(0, 0), (1, 0), (0, 1), (1, 1)], [[0, 1, 2], [1, 3, 2]])


@pytest.fixture(scope="session")
def ps_single():
    return refine_powell_sabin(single_triangle(), "barycenter")


@pytest.fixture(scope="session")
def ps_square():
    return refine_powell_sabin(square_mesh(), "barycenter")


@pytest.fixture(scope="session")
def ps_random():
    return refine_powell_sabin(random_square_mesh(), "incenter")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
