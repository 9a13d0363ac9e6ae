"""Tests for mesh parsing, derived geometry, notch cutting and the mesh writer."""

import numpy as np
import pytest

from .conftest import TWO_TRIANGLES, UNIT_SQUARE, hexagon_patch
from .errors import MeshError
from .mesh import (MARKER_LEFT, MARKER_NOTCH, MARKER_RIGHT, BoundaryCondition, BoundaryGroup,
                   cut_notch, format_mesh, notch_path, parse_mesh, partition_boundary, read_mesh,
                   write_mesh)
from .presets import square_triangles

NOTCH = ((0.5, 0.0), (0.5, 0.5))


def test_unit_square_single_quad(unit_square):
    assert unit_square.n_faces == 4
    assert unit_square.cell_areas[0] == pytest.approx(1.0)
    normals = unit_square.cell(0).normals
    expected = {(0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)}
    assert {tuple(np.round(n, 14) + 0.0) for n in normals} == expected


def test_two_triangles_share_one_face(two_triangles):
    assert two_triangles.n_faces == 5
    internal = two_triangles.internal_faces
    assert internal.size == 1
    assert set(two_triangles.face_cells[internal[0]]) == {0, 1}


def test_hexagon_patch_closure():
    mesh = hexagon_patch()
    assert mesh.n_cells == 3
    assert np.all(mesh.closure_defect() < 1e-12)


def test_normals_point_outward(tri_mesh, hex_mesh):
    for mesh in (tri_mesh, hex_mesh):
        for i in range(mesh.n_cells):
            geom = mesh.cell(i)
            outward = np.einsum("fd,fd->f", geom.normals, geom.face_midpoints - geom.centroid)
            assert np.all(outward > 0.0)


def test_internal_face_audit(tri_mesh, hex_mesh):
    for mesh in (tri_mesh, hex_mesh):
        from_adjacency, two_neighbours = mesh.internal_face_audit()
        assert from_adjacency == two_neighbours


def test_dangling_vertex_index():
    text = UNIT_SQUARE.replace("4 0 1 2 3", "4 0 1 2 7")
    with pytest.raises(MeshError, match="outside"):
        parse_mesh(text)


def test_clockwise_cell_rejected():
    text = UNIT_SQUARE.replace("4 0 1 2 3", "4 0 3 2 1")
    with pytest.raises(MeshError, match="clockwise"):
        parse_mesh(text)


def test_truncated_file():
    with pytest.raises(MeshError, match="truncated"):
        parse_mesh(UNIT_SQUARE.rsplit("\n", 3)[0])


def test_malformed_header():
    with pytest.raises(MeshError):
        parse_mesh("four 1\n")


def test_trailing_data():
    with pytest.raises(MeshError, match="Trailing"):
        parse_mesh(UNIT_SQUARE + "5\n")


def test_missing_boundary_marker():
    lines = TWO_TRIANGLES.splitlines()
    text = "\n".join(lines[:7] + ["3"] + lines[9:]) + "\n"
    with pytest.raises(MeshError, match="without a marker"):
        parse_mesh(text)


def test_marker_on_internal_face():
    lines = TWO_TRIANGLES.splitlines()
    text = "\n".join(lines[:7] + ["5"] + lines[8:] + ["0 2 7"]) + "\n"
    with pytest.raises(MeshError, match="internal face"):
        parse_mesh(text)


def test_marker_on_missing_edge():
    lines = TWO_TRIANGLES.splitlines()
    text = "\n".join(lines[:7] + ["5"] + lines[8:] + ["1 3 7"]) + "\n"
    with pytest.raises(MeshError, match="not an edge"):
        parse_mesh(text)


def test_format_parse_round_trip(hex_mesh, tmp_path):
    path = write_mesh(hex_mesh, tmp_path / "hex.mesh")
    again = read_mesh(path)
    assert format_mesh(again) == format_mesh(hex_mesh)
    assert np.array_equal(again.vertices, hex_mesh.vertices)
    assert np.array_equal(again.face_markers, hex_mesh.face_markers)


def test_cut_notch_counts():
    mesh = square_triangles(8)
    path = notch_path(mesh, NOTCH)
    cut = cut_notch(mesh, NOTCH)
    assert len(path) == 5
    assert cut.n_vertices == mesh.n_vertices + len(path) - 2
    assert cut.n_cells == mesh.n_cells
    assert cut.n_faces == mesh.n_faces + len(path) - 1


def test_cut_notch_preserves_cells_and_adds_boundary():
    mesh = square_triangles(8)
    cut = cut_notch(mesh, NOTCH)
    assert cut.cell_areas == pytest.approx(mesh.cell_areas, rel=1e-14)
    perimeter = mesh.face_lengths[mesh.boundary_faces].sum()
    new_perimeter = cut.face_lengths[cut.boundary_faces].sum()
    assert new_perimeter == pytest.approx(perimeter + 2 * 0.5, rel=1e-13)
    notch_faces = cut.faces_with_markers([MARKER_NOTCH])
    assert notch_faces.size == 2 * 4
    from_adjacency, two_neighbours = cut.internal_face_audit()
    assert from_adjacency == two_neighbours


def test_cut_notch_keeps_tip_shared():
    mesh = square_triangles(8)
    cut = cut_notch(mesh, NOTCH)
    mouth = np.flatnonzero(np.all(np.isclose(cut.vertices, [0.5, 0.0]), axis=1))
    assert mouth.size == 1
    assert np.flatnonzero(np.all(np.isclose(cut.vertices, [0.5, 0.5]), axis=1)).size == 1
    mid = np.flatnonzero(np.all(np.isclose(cut.vertices, [0.5, 0.25]), axis=1))
    assert mid.size == 2


def test_cut_notch_zero_length():
    with pytest.raises(MeshError, match="zero length"):
        cut_notch(square_triangles(4), ((0.5, 0.0), (0.5, 0.0)))


def test_cut_notch_along_boundary():
    with pytest.raises(MeshError):
        cut_notch(square_triangles(4), ((0.0, 0.0), (0.5, 0.0)))


def test_cut_notch_through_cell_interiors():
    # the rising diagonals run the other way, so this falling diagonal crosses cells
    with pytest.raises(MeshError, match="crosses"):
        cut_notch(square_triangles(4), ((0.0, 1.0), (0.5, 0.5)))


def test_cut_notch_interior_only_segment():
    with pytest.raises(MeshError, match="Exactly one"):
        cut_notch(square_triangles(4), ((0.5, 0.25), (0.5, 0.75)))


def test_cut_notch_single_edge():
    with pytest.raises(MeshError, match="two mesh edges"):
        cut_notch(square_triangles(4), ((0.5, 0.0), (0.5, 0.25)))


def test_boundary_groups_partition(tri_mesh):
    loaded = BoundaryGroup("left", frozenset({MARKER_LEFT}), BoundaryCondition.DIRICHLET)
    fixed = BoundaryGroup("right", frozenset({MARKER_RIGHT}), BoundaryCondition.DIRICHLET)
    groups = partition_boundary(tri_mesh, [loaded, fixed])
    assert groups[-1].condition is BoundaryCondition.TRACTION_FREE
    assert groups[-1].markers == frozenset({3, 4})
    total = sum(g.faces(tri_mesh).size for g in groups)
    assert total == tri_mesh.boundary_faces.size
    with pytest.raises(MeshError):
        partition_boundary(tri_mesh, [loaded, BoundaryGroup("again", frozenset({MARKER_LEFT}))])


def test_cell_geometry_is_shared_and_read_only(hex_mesh):
    geom = hex_mesh.cell(3)
    assert hex_mesh.cell(3) is geom
    with pytest.raises(ValueError):
        geom.normals[0, 0] = 0.0
    with pytest.raises(ValueError):
        geom.vertices[0] = 0.0


def test_summary(tri_mesh):
    summary = tri_mesh.summary()
    assert summary["cells"] == 32
    assert summary["markers"] == {1: 4, 2: 4, 3: 4, 4: 4}
    assert summary["area"] == pytest.approx(1.0)
