"""
Benchmark Presets
Structured meshes of the unit square and the built-in run configurations for
the tension (mode I) and shear (mode II) benchmarks.
"""

import logging
from enum import Enum
from typing import Dict, List, Tuple

import numpy as np

from .errors import ConfigError
from .mesh import MARKER_BOTTOM, MARKER_LEFT, MARKER_RIGHT, MARKER_TOP, Mesh

logger = logging.getLogger(__name__)

# Tolerance for classifying boundary edges of the unit square
SIDE_TOLERANCE = 1e-12

NOTCH_SEGMENT = [0.5, 0.0, 0.5, 0.5]

PRESETS: Dict[str, Dict] = {
    "mode-i": {
        "run": {"name": "mode-i"},
        "mesh": {"preset": "square-triangles", "cells_per_side": 50},
        "material": {"formulation": "hybrid-vd"},
        "solver": {"n_steps": 2700, "schedule": [[500.0, 1e-5], [1.0, 1e-6]]},
        "loading": {"loaded_markers": [MARKER_LEFT], "fixed_markers": [MARKER_RIGHT],
                    "direction": [-1.0, 0.0]},
        "notch": {"mode": "mesh-cut", "segment": NOTCH_SEGMENT},
    },
    "mode-ii": {
        "run": {"name": "mode-ii"},
        "mesh": {"preset": "square-graded", "h_min": 0.008, "h_max": 0.05, "growth": 1.2},
        "material": {"formulation": "hybrid-vd"},
        "solver": {"n_steps": 1500, "schedule": [[1.0, 1e-5]]},
        "loading": {"loaded_markers": [MARKER_LEFT], "fixed_markers": [MARKER_RIGHT],
                    "direction": [0.0, 1.0]},
        "notch": {"mode": "mesh-cut", "segment": NOTCH_SEGMENT},
    },
    "mode-i-hexagonal": {
        "run": {"name": "mode-i-hexagonal"},
        "mesh": {"preset": "square-hexagons", "cells_per_side": 40},
        "material": {"formulation": "hybrid-vd"},
        "solver": {"n_steps": 2700, "schedule": [[500.0, 1e-5], [1.0, 1e-6]]},
        "loading": {"loaded_markers": [MARKER_LEFT], "fixed_markers": [MARKER_RIGHT],
                    "direction": [-1.0, 0.0]},
        "notch": {"mode": "history-seed", "segment": NOTCH_SEGMENT, "amplitude": 1000.0,
                  "width": 0.05},
    },
}


class MeshPreset(str, Enum):
    """Built-in meshes of the unit square."""
    SQUARE_TRIANGLES = "square-triangles"
    SQUARE_HEXAGONS = "square-hexagons"
    SQUARE_GRADED = "square-graded"


def preset_config(name: str) -> Dict:
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return PRESETS[name]


def square_markers(vertices: np.ndarray, cells: List[List[int]]) -> Dict[Tuple[int, int], int]:
    """Side markers of every boundary edge of a unit-square mesh."""
    count: Dict[Tuple[int, int], int] = {}
    for cell in cells:
        for a, b in zip(cell, cell[1:] + cell[:1]):
            key = (min(a, b), max(a, b))
            count[key] = count.get(key, 0) + 1
    markers = {}
    for (a, b), n in count.items():
        if n != 1:
            continue
        pa, pb = vertices[a], vertices[b]
        if abs(pa[0]) < SIDE_TOLERANCE and abs(pb[0]) < SIDE_TOLERANCE:
            markers[(a, b)] = MARKER_LEFT
        elif abs(pa[0] - 1.0) < SIDE_TOLERANCE and abs(pb[0] - 1.0) < SIDE_TOLERANCE:
            markers[(a, b)] = MARKER_RIGHT
        elif abs(pa[1]) < SIDE_TOLERANCE and abs(pb[1]) < SIDE_TOLERANCE:
            markers[(a, b)] = MARKER_BOTTOM
        elif abs(pa[1] - 1.0) < SIDE_TOLERANCE and abs(pb[1] - 1.0) < SIDE_TOLERANCE:
            markers[(a, b)] = MARKER_TOP
    return markers


def tensor_triangles(xs: np.ndarray, ys: np.ndarray) -> Mesh:
    """Tensor grid with every rectangle split along its rising diagonal."""
    nx, ny = len(xs), len(ys)
    gx, gy = np.meshgrid(xs, ys)
    vertices = np.column_stack([gx.ravel(), gy.ravel()])
    cells = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            v00 = j * nx + i
            v10, v01, v11 = v00 + 1, v00 + nx, v00 + nx + 1
            cells.append([v00, v10, v11])
            cells.append([v00, v11, v01])
    return Mesh.from_cells(vertices, cells, square_markers(vertices, cells))


def square_triangles(n: int) -> Mesh:
    """n x n squares, each split into two triangles."""
    if n < 1:
        raise ConfigError(f"cells_per_side must be >= 1, got {n}")
    grid = np.linspace(0.0, 1.0, n + 1)
    return tensor_triangles(grid, grid)


def square_hexagons(n: int, offset: float = 0.2) -> Mesh:
    """Brick layout of hexagons with half-cell quadrilaterals closing odd rows.

    Interior vertex rows zigzag by +-offset/n so the bricks become hexagons;
    the outer boundary stays straight.
    """
    if n < 2:
        raise ConfigError(f"cells_per_side must be >= 2 for hexagons, got {n}")
    ni = 2 * n + 1
    delta = offset / n
    vertices = np.empty((ni * (n + 1), 2))
    for j in range(n + 1):
        for i in range(ni):
            shift = 0.0 if j in (0, n) else (-1) ** (i + j) * delta
            vertices[j * ni + i] = (i / (2 * n), j / n + shift)

    def vid(i: int, j: int) -> int:
        return j * ni + i

    cells = []
    for r in range(n):
        odd = r % 2
        if odd:
            cells.append([vid(0, r), vid(1, r), vid(1, r + 1), vid(0, r + 1)])
        for c in range(n - odd):
            i0 = 2 * c + odd
            cells.append([vid(i0, r), vid(i0 + 1, r), vid(i0 + 2, r),
                          vid(i0 + 2, r + 1), vid(i0 + 1, r + 1), vid(i0, r + 1)])
        if odd:
            cells.append([vid(2 * n - 1, r), vid(2 * n, r), vid(2 * n, r + 1), vid(2 * n - 1, r + 1)])
    return Mesh.from_cells(vertices, cells, square_markers(vertices, cells))


def graded_spacing(start: float, stop: float, h_min: float, h_max: float, growth: float) -> np.ndarray:
    """Points from start to stop whose spacing grows geometrically away from start."""
    length = abs(stop - start)
    steps = []
    h = h_min
    while sum(steps) < length:
        steps.append(h)
        h = min(h * growth, h_max)
    steps = np.array(steps) * length / sum(steps)
    points = start + np.sign(stop - start) * np.concatenate([[0.0], np.cumsum(steps)])
    points[-1] = stop
    return points


def square_graded(h_min: float = 0.008, h_max: float = 0.05, growth: float = 1.2) -> Mesh:
    """Triangles with uniform spacing h_min over [0.5, 1] x [0, 0.5], graded elsewhere."""
    if not 0.0 < h_min <= h_max or growth < 1.0:
        raise ConfigError(f"Invalid grading h_min={h_min}, h_max={h_max}, growth={growth}")
    n_fine = int(np.ceil(0.5 / h_min - 1e-9))
    fine = np.linspace(0.0, 0.5, n_fine + 1)
    xs = np.concatenate([graded_spacing(0.5, 0.0, h_min, h_max, growth)[::-1][:-1], 0.5 + fine])
    ys = np.concatenate([fine[:-1], graded_spacing(0.5, 1.0, h_min, h_max, growth)])
    return tensor_triangles(xs, ys)


def build_preset_mesh(name: str, cells_per_side: int = 50, h_min: float = 0.008,
                      h_max: float = 0.05, growth: float = 1.2) -> Mesh:
    preset = MeshPreset(name)
    if preset is MeshPreset.SQUARE_TRIANGLES:
        mesh = square_triangles(cells_per_side)
    elif preset is MeshPreset.SQUARE_HEXAGONS:
        mesh = square_hexagons(cells_per_side)
    else:
        mesh = square_graded(h_min, h_max, growth)
    logger.info(f"Built {preset.value} mesh: {mesh.n_cells} cells, {mesh.n_faces} faces")
    return mesh
