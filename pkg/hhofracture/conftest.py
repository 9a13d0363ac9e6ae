"""Shared fixtures: small meshes, material data and the --runslow switch."""

import numpy as np
import pytest

from .energy import MaterialParams
from .mesh import MARKER_BOTTOM, MARKER_LEFT, MARKER_RIGHT, MARKER_TOP, Mesh, parse_mesh
from .presets import square_hexagons, square_triangles

UNIT_SQUARE = """4 1
0 0
1 0
1 1
0 1
4 0 1 2 3
4
0 1 3
1 2 2
2 3 4
3 0 1
"""

TWO_TRIANGLES = """4 2
0 0
1 0
1 1
0 1
3 0 1 2
3 0 2 3
4
0 1 3
1 2 2
2 3 4
3 0 1
"""


def regular_polygon(k: int, radius: float = 1.0, center=(0.0, 0.0), rotation: float = 0.0) -> Mesh:
    angles = rotation + 2.0 * np.pi * np.arange(k) / k
    vertices = np.column_stack([center[0] + radius * np.cos(angles), center[1] + radius * np.sin(angles)])
    cell = list(range(k))
    return Mesh.from_cells(vertices, [cell], {(i, (i + 1) % k): 5 for i in range(k)})


def single_cell(points) -> Mesh:
    k = len(points)
    return Mesh.from_cells(np.asarray(points, dtype=float), [list(range(k))],
                           {(i, (i + 1) % k): 5 for i in range(k)})


def hexagon_patch() -> Mesh:
    """Central hexagon with two neighbouring hexagons."""
    text = """14 3
1 0
2 0.5
2 1.5
1 2
0 1.5
0 0.5
3 0
4 0.5
4 1.5
3 2
-1 0
-2 0.5
-2 1.5
-1 2
6 0 1 2 3 4 5
6 6 7 8 9 2 1
6 10 5 4 13 12 11
14
0 1 5
2 3 5
3 4 5
5 0 5
6 7 5
7 8 5
8 9 5
9 2 5
1 6 5
10 11 5
11 12 5
12 13 5
13 4 5
5 10 5
"""
    return parse_mesh(text)


# Star-shaped but non-convex quadrilateral ("arrowhead")
NONCONVEX_CELL = [(0.0, 0.0), (1.0, 0.3), (2.0, 0.0), (1.0, 1.5)]

FIXTURE_CELLS = {
    "unit-triangle": [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
    "thin-triangle": [(0.0, 0.0), (1.0, 0.05), (0.2, 0.15)],
    "square": [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
    "skew-quad": [(0.1, 0.0), (1.3, 0.2), (1.0, 0.9), (-0.2, 1.1)],
    "pentagon": [(0.0, 0.0), (1.0, -0.2), (1.6, 0.7), (0.8, 1.4), (-0.1, 0.9)],
    "non-convex": NONCONVEX_CELL,
}


def fixture_meshes():
    meshes = {name: single_cell(points) for name, points in FIXTURE_CELLS.items()}
    meshes["hexagon"] = regular_polygon(6)
    return meshes


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run desk-scale benchmark runs")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale benchmark run (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow", default=False):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def params():
    return MaterialParams()


@pytest.fixture
def unit_square():
    return parse_mesh(UNIT_SQUARE)


@pytest.fixture
def two_triangles():
    return parse_mesh(TWO_TRIANGLES)


@pytest.fixture
def tri_mesh():
    return square_triangles(4)


@pytest.fixture
def hex_mesh():
    return square_hexagons(4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


SIDE_MARKERS = (MARKER_LEFT, MARKER_RIGHT, MARKER_BOTTOM, MARKER_TOP)
