"""
Polygonal Mesh - Topology, Geometry and Notch Insertion
Reads and writes the ASCII polygonal mesh format, derives faces with their
adjacency and boundary markers, and cuts notches by duplicating the vertices
along an edge path.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import MeshError
from .functional import FaceBasis, signed_area

logger = logging.getLogger(__name__)

# Boundary markers
MARKER_INTERNAL = 0
MARKER_LEFT = 1
MARKER_RIGHT = 2
MARKER_BOTTOM = 3
MARKER_TOP = 4
MARKER_NOTCH = 100

MARKER_NAMES = {
    MARKER_LEFT: "left",
    MARKER_RIGHT: "right",
    MARKER_BOTTOM: "bottom",
    MARKER_TOP: "top",
    MARKER_NOTCH: "notch",
}

# Relative tolerance for geometric searches, scaled by the bounding box diagonal
SNAP_TOLERANCE = 1e-10


class BoundaryCondition(Enum):
    """Condition carried by a group of boundary faces."""
    DIRICHLET = "dirichlet"
    TRACTION_FREE = "traction-free"


@dataclass(frozen=True)
class BoundaryGroup:
    """Named set of boundary markers sharing one condition."""
    name: str
    markers: FrozenSet[int]
    condition: BoundaryCondition = BoundaryCondition.TRACTION_FREE

    def faces(self, mesh: "Mesh") -> np.ndarray:
        return np.flatnonzero(np.isin(mesh.face_markers, sorted(self.markers)))


@dataclass(frozen=True)
class CellGeometry:
    """Geometry of one cell; face arrays follow the counter-clockwise edge order."""
    index: int
    vertices: np.ndarray
    centroid: np.ndarray
    area: float
    diameter: float
    faces: np.ndarray
    face_signs: np.ndarray
    face_lengths: np.ndarray
    face_midpoints: np.ndarray
    normals: np.ndarray

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def edge(self, local_face: int) -> Tuple[np.ndarray, np.ndarray]:
        k = self.vertices.shape[0]
        return self.vertices[local_face], self.vertices[(local_face + 1) % k]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _polygon_area_centroid(points: np.ndarray) -> Tuple[float, np.ndarray]:
    x, y = points[:, 0], points[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if area == 0.0:
        return 0.0, points.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return float(area), np.array([cx, cy])


class Mesh:
    """Immutable polygonal mesh with derived faces and geometry.

    Faces are identified by their (unordered) vertex pair and numbered in
    order of first appearance while walking the cells. A face is stored with
    the orientation of its first cell; its global normal points out of that
    cell, so `face_signs` is +1 for the first cell and -1 for the second.
    """

    def __init__(self, vertices: np.ndarray, cells: Sequence[Sequence[int]],
                 boundary_markers: Dict[Tuple[int, int], int]):
        self.vertices = _frozen(np.array(vertices, dtype=float).reshape(-1, 2))
        self.cells: List[np.ndarray] = [_frozen(np.array(c, dtype=np.int64)) for c in cells]
        self._validate_indices()
        self._build_faces()
        self._assign_markers(boundary_markers)
        self._build_geometry()
        self._geometries: Tuple[CellGeometry, ...] = tuple(self._cell_geometry(i) for i in range(self.n_cells))

    @classmethod
    def from_cells(cls, vertices, cells, boundary_markers: Optional[Dict[Tuple[int, int], int]] = None) -> "Mesh":
        """Build a mesh from vertices, CCW cells and markers keyed by vertex pair."""
        markers = {}
        for (a, b), marker in (boundary_markers or {}).items():
            markers[(min(a, b), max(a, b))] = int(marker)
        return cls(vertices, cells, markers)

    # Construction

    def _validate_indices(self):
        nv = self.vertices.shape[0]
        if nv == 0 or not self.cells:
            raise MeshError("Mesh has no vertices or no cells")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("Non-finite vertex coordinates")
        for i, cell in enumerate(self.cells):
            if cell.shape[0] < 3:
                raise MeshError(f"Cell {i} has fewer than 3 vertices")
            if cell.min() < 0 or cell.max() >= nv:
                raise MeshError(f"Cell {i} references a vertex outside 0..{nv - 1}")
            if np.unique(cell).shape[0] != cell.shape[0]:
                raise MeshError(f"Cell {i} repeats a vertex")

    def _build_faces(self):
        face_index: Dict[Tuple[int, int], int] = {}
        face_vertices: List[Tuple[int, int]] = []
        face_cells: List[List[int]] = []
        cell_faces: List[np.ndarray] = []
        cell_signs: List[np.ndarray] = []

        for i, cell in enumerate(self.cells):
            k = cell.shape[0]
            faces = np.empty(k, dtype=np.int64)
            signs = np.empty(k, dtype=np.int64)
            for j in range(k):
                a, b = int(cell[j]), int(cell[(j + 1) % k])
                key = (min(a, b), max(a, b))
                f = face_index.get(key)
                if f is None:
                    f = len(face_vertices)
                    face_index[key] = f
                    face_vertices.append((a, b))
                    face_cells.append([i, -1])
                    signs[j] = 1
                else:
                    if face_cells[f][1] != -1:
                        raise MeshError(f"Face {key} is shared by more than two cells")
                    if face_vertices[f] != (b, a):
                        raise MeshError(
                            f"Cells {face_cells[f][0]} and {i} traverse face {key} "
                            "in the same direction (inconsistent orientation)")
                    face_cells[f][1] = i
                    signs[j] = -1
                faces[j] = f
            cell_faces.append(_frozen(faces))
            cell_signs.append(_frozen(signs))

        self._face_index = face_index
        self.face_vertices = _frozen(np.array(face_vertices, dtype=np.int64))
        self.face_cells = _frozen(np.array(face_cells, dtype=np.int64))
        self.cell_faces = cell_faces
        self.cell_face_signs = cell_signs

    def _assign_markers(self, boundary_markers: Dict[Tuple[int, int], int]):
        markers = np.zeros(self.n_faces, dtype=np.int64)
        for key, marker in boundary_markers.items():
            f = self._face_index.get(key)
            if f is None:
                raise MeshError(f"Boundary marker line {key} is not an edge of the mesh")
            if self.face_cells[f, 1] != -1:
                raise MeshError(f"Boundary marker line {key} refers to an internal face")
            if marker == MARKER_INTERNAL:
                raise MeshError(f"Boundary face {key} carries the internal marker 0")
            markers[f] = marker
        missing = np.flatnonzero(self.boundary_mask & (markers == MARKER_INTERNAL))
        if missing.size:
            pairs = [tuple(self.face_vertices[f]) for f in missing[:5]]
            raise MeshError(f"{missing.size} boundary faces without a marker, e.g. {pairs}")
        self.face_markers = _frozen(markers)

    def _build_geometry(self):
        areas = np.empty(self.n_cells)
        centroids = np.empty((self.n_cells, 2))
        diameters = np.empty(self.n_cells)
        for i, cell in enumerate(self.cells):
            pts = self.vertices[cell]
            area, centroid = _polygon_area_centroid(pts)
            if area <= 0.0:
                raise MeshError(f"Cell {i} is clockwise or degenerate (signed area {area:.3e})")
            k = pts.shape[0]
            for j in range(k):
                if signed_area(centroid, pts[j], pts[(j + 1) % k]) <= 0.0:
                    raise MeshError(f"Cell {i} is not star-shaped with respect to its centroid")
            diffs = pts[:, None, :] - pts[None, :, :]
            areas[i] = area
            centroids[i] = centroid
            diameters[i] = np.sqrt((diffs ** 2).sum(axis=-1)).max()

        a = self.vertices[self.face_vertices[:, 0]]
        b = self.vertices[self.face_vertices[:, 1]]
        tangents = b - a
        lengths = np.hypot(tangents[:, 0], tangents[:, 1])
        if np.any(lengths <= 0.0):
            raise MeshError("Mesh contains a zero-length face")
        tangents = tangents / lengths[:, None]

        self.cell_areas = _frozen(areas)
        self.cell_centroids = _frozen(centroids)
        self.cell_diameters = _frozen(diameters)
        self.face_lengths = _frozen(lengths)
        self.face_midpoints = _frozen(0.5 * (a + b))
        self.face_tangents = _frozen(tangents)
        self.face_normals = _frozen(np.column_stack([tangents[:, 1], -tangents[:, 0]]))
        self.cell_n_faces = _frozen(np.array([c.shape[0] for c in self.cells], dtype=np.int64))

    # Sizes and lookups

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_faces(self) -> int:
        return self.face_vertices.shape[0]

    @property
    def boundary_mask(self) -> np.ndarray:
        return self.face_cells[:, 1] == -1

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    @property
    def internal_faces(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @property
    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def find_face(self, a: int, b: int) -> Optional[int]:
        return self._face_index.get((min(a, b), max(a, b)))

    def faces_with_markers(self, markers: Iterable[int]) -> np.ndarray:
        return np.flatnonzero(np.isin(self.face_markers, list(markers)))

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.face_vertices[self.boundary_faces].ravel())

    def _cell_geometry(self, i: int) -> CellGeometry:
        faces = self.cell_faces[i]
        signs = self.cell_face_signs[i]
        return CellGeometry(
            index=i,
            vertices=_frozen(self.vertices[self.cells[i]]),
            centroid=self.cell_centroids[i],
            area=float(self.cell_areas[i]),
            diameter=float(self.cell_diameters[i]),
            faces=faces,
            face_signs=signs,
            face_lengths=_frozen(self.face_lengths[faces]),
            face_midpoints=_frozen(self.face_midpoints[faces]),
            normals=_frozen(signs[:, None] * self.face_normals[faces]),
        )

    def cell(self, i: int) -> CellGeometry:
        """Geometry view of cell i."""
        return self._geometries[i]

    def face_basis(self, f: int, degree: int = 1) -> FaceBasis:
        """Arclength monomials on face f, oriented by the global face tangent."""
        return FaceBasis(self.face_midpoints[f], self.face_tangents[f],
                         float(self.face_lengths[f]), degree)

    # Audits

    def closure_defect(self) -> np.ndarray:
        """Per cell |sum_F |F| n_TF| / h_T, zero for closed polygons."""
        defects = np.empty(self.n_cells)
        for i in range(self.n_cells):
            geom = self.cell(i)
            total = (geom.face_lengths[:, None] * geom.normals).sum(axis=0)
            defects[i] = np.hypot(*total) / geom.diameter
        return defects

    def internal_face_audit(self) -> Tuple[int, int]:
        """(internal faces counted from cell adjacency, faces with two neighbours)."""
        incidences = sum(c.shape[0] for c in self.cells)
        from_adjacency = (incidences - self.boundary_faces.shape[0]) // 2
        return from_adjacency, int((~self.boundary_mask).sum())

    def summary(self) -> Dict[str, object]:
        markers, counts = np.unique(self.face_markers[self.boundary_faces], return_counts=True)
        sides, side_counts = np.unique(self.cell_n_faces, return_counts=True)
        return {
            "vertices": self.n_vertices,
            "cells": self.n_cells,
            "faces": self.n_faces,
            "internal_faces": int((~self.boundary_mask).sum()),
            "boundary_faces": int(self.boundary_mask.sum()),
            "markers": {int(m): int(c) for m, c in zip(markers, counts)},
            "cell_sides": {int(s): int(c) for s, c in zip(sides, side_counts)},
            "h_min": float(self.cell_diameters.min()),
            "h_max": float(self.cell_diameters.max()),
            "area": float(self.cell_areas.sum()),
            "closure_defect": float(self.closure_defect().max()),
        }

    def boundary_markers(self) -> Dict[Tuple[int, int], int]:
        return {tuple(int(v) for v in self.face_vertices[f]): int(self.face_markers[f])
                for f in self.boundary_faces}


# File format

def _tokens(text: str):
    for token in text.split():
        yield token


class _Reader:
    def __init__(self, text: str):
        self._it = _tokens(text)
        self.count = 0

    def next(self, kind, what: str):
        try:
            token = next(self._it)
        except StopIteration:
            raise MeshError(f"Mesh file truncated while reading {what}") from None
        self.count += 1
        try:
            return kind(token)
        except ValueError:
            raise MeshError(f"Malformed {what}: {token!r}") from None

    def exhausted(self) -> bool:
        return next(self._it, None) is None


def parse_mesh(text: str) -> Mesh:
    """Parse the ASCII polygonal mesh format."""
    reader = _Reader(text)
    nv = reader.next(int, "vertex count")
    nc = reader.next(int, "cell count")
    if nv <= 0 or nc <= 0:
        raise MeshError(f"Invalid header counts nv={nv} nc={nc}")
    vertices = np.array([[reader.next(float, f"vertex {i}"), reader.next(float, f"vertex {i}")]
                         for i in range(nv)])
    cells = []
    for i in range(nc):
        k = reader.next(int, f"cell {i} size")
        if k < 3:
            raise MeshError(f"Cell {i} declares {k} vertices")
        cells.append([reader.next(int, f"cell {i} vertex") for _ in range(k)])
    nb = reader.next(int, "boundary face count")
    if nb < 0:
        raise MeshError(f"Invalid boundary face count {nb}")
    markers: Dict[Tuple[int, int], int] = {}
    for i in range(nb):
        a = reader.next(int, f"boundary line {i}")
        b = reader.next(int, f"boundary line {i}")
        marker = reader.next(int, f"boundary marker {i}")
        key = (min(a, b), max(a, b))
        if key in markers:
            raise MeshError(f"Boundary face {key} listed twice")
        markers[key] = marker
    if not reader.exhausted():
        raise MeshError("Trailing data after the boundary section")
    mesh = Mesh(vertices, cells, markers)
    logger.debug(f"Parsed mesh: {mesh.n_vertices} vertices, {mesh.n_cells} cells, {mesh.n_faces} faces")
    return mesh


def format_mesh(mesh: Mesh) -> str:
    """Inverse of parse_mesh; coordinates keep 17 significant digits."""
    lines = [f"{mesh.n_vertices} {mesh.n_cells}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [" ".join([str(c.shape[0])] + [str(v) for v in c]) for c in mesh.cells]
    boundary = mesh.boundary_faces
    lines.append(str(boundary.shape[0]))
    lines += [f"{mesh.face_vertices[f, 0]} {mesh.face_vertices[f, 1]} {mesh.face_markers[f]}"
              for f in boundary]
    return "\n".join(lines) + "\n"


def read_mesh(path) -> Mesh:
    return parse_mesh(Path(path).read_text())


def write_mesh(mesh: Mesh, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_mesh(mesh))
    return path


# Notch insertion

def _snap_vertex(mesh: Mesh, point: np.ndarray, tol: float) -> int:
    dist = np.hypot(*(mesh.vertices - point).T)
    i = int(np.argmin(dist))
    if dist[i] > tol:
        raise MeshError(f"Notch endpoint {tuple(point)} is not a mesh vertex")
    return i


def notch_path(mesh: Mesh, segment) -> List[int]:
    """Vertex path from the boundary mouth to the interior tip of a notch segment."""
    p0, p1 = (np.asarray(p, dtype=float) for p in segment)
    lo, hi = mesh.bounding_box
    tol = SNAP_TOLERANCE * float(np.hypot(*(hi - lo)))
    d = p1 - p0
    length = float(np.hypot(*d))
    if length <= tol:
        raise MeshError("Notch segment has zero length")

    i0 = _snap_vertex(mesh, p0, tol)
    i1 = _snap_vertex(mesh, p1, tol)
    rel = mesh.vertices - p0
    t = rel @ d / length ** 2
    off = np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0]) / length
    on_line = np.flatnonzero((off <= tol) & (t >= -tol / length) & (t <= 1.0 + tol / length))
    path = [int(v) for v in on_line[np.argsort(t[on_line], kind="stable")]]
    if path[0] != i0 or path[-1] != i1:
        raise MeshError("Notch endpoints do not bound the vertex path")

    on_boundary = set(mesh.boundary_vertices().tolist())
    mouth_first = i0 in on_boundary
    if mouth_first == (i1 in on_boundary):
        raise MeshError("Exactly one notch endpoint must lie on the boundary")
    if not mouth_first:
        path.reverse()
    if len(path) < 3:
        raise MeshError("Notch path must span at least two mesh edges")

    for a, b in zip(path[:-1], path[1:]):
        f = mesh.find_face(a, b)
        if f is None:
            raise MeshError(f"Notch segment crosses cell interiors between vertices {a} and {b}")
        if mesh.boundary_mask[f]:
            raise MeshError(f"Notch path runs along boundary face ({a}, {b})")
    for v in path[1:-1]:
        if v in on_boundary:
            raise MeshError(f"Notch path touches the boundary at interior vertex {v}")
    return path


def cut_notch(mesh: Mesh, segment) -> Mesh:
    """Open a traction-free notch along an edge path by duplicating its interior vertices."""
    path = notch_path(mesh, segment)
    mouth, tip = mesh.vertices[path[0]], mesh.vertices[path[-1]]
    d = tip - mouth
    interior = path[1:-1]
    copies = {v: mesh.n_vertices + k for k, v in enumerate(interior)}
    interior_set = set(interior)

    cells = [list(map(int, c)) for c in mesh.cells]
    for i, cell in enumerate(cells):
        if not interior_set.intersection(cell):
            continue
        rel = mesh.vertices[cell] - mouth
        side = float((d[0] * rel[:, 1] - d[1] * rel[:, 0]).sum())
        if side > 0.0:
            cells[i] = [copies.get(v, v) for v in cell]

    vertices = np.vstack([mesh.vertices, mesh.vertices[interior]])
    markers = mesh.boundary_markers()
    for a, b in zip(path[:-1], path[1:]):
        markers[(a, b)] = MARKER_NOTCH
        markers[(copies.get(a, a), copies.get(b, b))] = MARKER_NOTCH

    cut = Mesh.from_cells(vertices, cells, markers)
    if cut.n_faces != mesh.n_faces + len(path) - 1:
        raise MeshError("Notch cut did not separate the cells along the path")
    logger.info(f"Cut notch along {len(path) - 1} edges, duplicated {len(interior)} vertices")
    return cut


def partition_boundary(mesh: Mesh, groups: Sequence[BoundaryGroup]) -> List[BoundaryGroup]:
    """Check that groups are disjoint and add a traction-free group for leftover markers."""
    seen: Dict[int, str] = {}
    for group in groups:
        for m in group.markers:
            if m in seen:
                raise MeshError(f"Marker {m} assigned to both {seen[m]!r} and {group.name!r}")
            seen[m] = group.name
    present = set(np.unique(mesh.face_markers[mesh.boundary_faces]).tolist())
    leftover = frozenset(present - set(seen))
    result = list(groups)
    if leftover:
        result.append(BoundaryGroup("other", leftover, BoundaryCondition.TRACTION_FREE))
    return result
