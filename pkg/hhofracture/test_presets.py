"""Tests for the built-in unit-square meshes and run presets."""

import numpy as np
import pytest

from .config import config_from_dict
from .errors import ConfigError
from .mesh import MARKER_NOTCH, cut_notch
from .presets import (PRESETS, build_preset_mesh, graded_spacing, preset_config, square_graded,
                      square_hexagons, square_triangles)
from .solver import LoadSchedule


def test_square_triangles_counts():
    mesh = square_triangles(5)
    assert mesh.n_cells == 50
    assert mesh.n_vertices == 36
    assert mesh.cell_areas.sum() == pytest.approx(1.0)
    assert mesh.summary()["markers"] == {1: 5, 2: 5, 3: 5, 4: 5}


def test_square_hexagons_layout():
    mesh = square_hexagons(4)
    summary = mesh.summary()
    assert summary["cell_sides"] == {4: 4, 6: 14}
    assert summary["area"] == pytest.approx(1.0, rel=1e-13)
    assert set(summary["markers"]) == {1, 2, 3, 4}
    assert np.all(mesh.closure_defect() < 1e-12)
    lo, hi = mesh.bounding_box
    assert lo == pytest.approx([0.0, 0.0])
    assert hi == pytest.approx([1.0, 1.0])


def test_square_hexagons_too_coarse():
    with pytest.raises(ConfigError):
        square_hexagons(1)


def test_graded_spacing():
    points = graded_spacing(0.5, 1.0, 0.01, 0.05, 1.3)
    steps = np.diff(points)
    assert points[0] == 0.5 and points[-1] == 1.0
    assert np.all(steps > 0.0)
    assert steps.max() <= 0.05 + 1e-15
    assert steps[0] <= 0.01
    assert np.all(np.diff(steps) >= -1e-15)
    backwards = graded_spacing(0.5, 0.0, 0.01, 0.05, 1.3)
    assert backwards[-1] == 0.0
    assert np.all(np.diff(backwards) < 0.0)


def test_square_graded_refines_crack_region():
    mesh = square_graded(0.05, 0.2, 1.5)
    assert mesh.cell_areas.sum() == pytest.approx(1.0, rel=1e-12)
    fine = (mesh.cell_centroids[:, 0] > 0.5) & (mesh.cell_centroids[:, 1] < 0.5)
    assert mesh.cell_diameters[fine].max() == pytest.approx(0.05 * np.sqrt(2.0), rel=1e-9)
    assert mesh.cell_diameters.max() > mesh.cell_diameters[fine].max()
    cut = cut_notch(mesh, ((0.5, 0.0), (0.5, 0.5)))
    assert cut.faces_with_markers([MARKER_NOTCH]).size == 2 * 10


def test_square_graded_rejects_bad_grading():
    with pytest.raises(ConfigError):
        square_graded(0.1, 0.05, 1.2)


def test_build_preset_mesh():
    mesh = build_preset_mesh("square-triangles", cells_per_side=3)
    assert mesh.n_cells == 18
    with pytest.raises(ValueError):
        build_preset_mesh("square-circles")


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_validate(name):
    config = config_from_dict({"run": {"preset": name}})
    assert config.run.name == name
    assert config.solver.n_steps > 0
    assert preset_config(name) is PRESETS[name]


@pytest.mark.parametrize("name", ["mode-i", "mode-i-hexagonal"])
def test_mode_i_presets_reach_post_peak_displacement(name):
    config = config_from_dict({"run": {"preset": name}})
    final = LoadSchedule(config.solver.schedule).load(config.solver.n_steps)
    assert final >= 7.0e-3
