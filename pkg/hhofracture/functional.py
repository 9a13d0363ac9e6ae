"""
Quadrature on polygons and segments, scaled monomial bases and L2 projectors.

Cell rules are built by fanning the polygon from its centroid and mapping a
collapsed Gauss-Legendre rule onto each sub-triangle. Face rules are plain
Gauss-Legendre rules along the segment.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Tuple

import numpy as np
from scipy import linalg

from .errors import GeometryError

logger = logging.getLogger(__name__)

# Exactness covers products of P2 gradients and energies of P1 strains
DEFAULT_CELL_DEGREE = 4
DEFAULT_FACE_DEGREE = 4


@dataclass(frozen=True)
class QuadRule:
    """Quadrature nodes in physical coordinates with positive weights."""
    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return self.weights.shape[0]

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate node values; the first axis runs over the nodes."""
        return np.tensordot(self.weights, values, axes=(0, 0))


@lru_cache(maxsize=None)
def _gauss_legendre_01(n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _reference_triangle_rule(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Collapsed (Duffy) rule on the triangle (0,0), (1,0), (0,1)."""
    # the collapse jacobian raises the degree in u by one
    nu = (degree + 3) // 2
    nv = (degree + 2) // 2
    u, wu = _gauss_legendre_01(nu)
    v, wv = _gauss_legendre_01(nv)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = np.outer(wu * (1.0 - u), wv)
    points = np.column_stack([uu.ravel(), (vv * (1.0 - uu)).ravel()])
    return points, ww.ravel()


def signed_area(p0: np.ndarray, p1: np.ndarray, p2: np.ndarray) -> float:
    return 0.5 * float((p1[0] - p0[0]) * (p2[1] - p0[1])
                       - (p1[1] - p0[1]) * (p2[0] - p0[0]))


def triangle_quadrature(p0, p1, p2, degree: int = DEFAULT_CELL_DEGREE) -> QuadRule:
    """Quadrature on a counter-clockwise triangle, exact up to `degree`."""
    p0, p1, p2 = (np.asarray(p, dtype=float) for p in (p0, p1, p2))
    area = signed_area(p0, p1, p2)
    if area <= 0.0:
        raise GeometryError(f"Triangle with non-positive area {area:.3e}")
    ref_points, ref_weights = _reference_triangle_rule(degree)
    jac = np.column_stack([p1 - p0, p2 - p0])
    points = p0 + ref_points @ jac.T
    return QuadRule(points, 2.0 * area * ref_weights, degree)


def cell_quadrature(cell, degree: int = DEFAULT_CELL_DEGREE) -> QuadRule:
    """Quadrature on a polygon by a fan of triangles around its centroid."""
    vertices = cell.vertices
    center = cell.centroid
    points: List[np.ndarray] = []
    weights: List[np.ndarray] = []
    k = vertices.shape[0]
    for i in range(k):
        a, b = vertices[i], vertices[(i + 1) % k]
        if signed_area(center, a, b) <= 0.0:
            raise GeometryError(
                f"Cell {getattr(cell, 'index', '?')} is not star-shaped "
                f"with respect to its centroid (fan triangle {i})")
        rule = triangle_quadrature(center, a, b, degree)
        points.append(rule.points)
        weights.append(rule.weights)
    return QuadRule(np.vstack(points), np.concatenate(weights), degree)


def face_quadrature(a, b, degree: int = DEFAULT_FACE_DEGREE) -> QuadRule:
    """Gauss-Legendre rule on the segment [a, b]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.hypot(*(b - a)))
    if length <= 0.0:
        raise GeometryError("Face with zero length")
    t, w = _gauss_legendre_01(degree // 2 + 1)
    points = a + np.outer(t, b - a)
    return QuadRule(points, length * w, degree)


def monomial_exponents(degree: int) -> List[Tuple[int, int]]:
    """Exponents (a, b) of x^a y^b, ordered by total degree."""
    return [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]


@dataclass(frozen=True)
class CellBasis:
    """Scaled monomials m((x - center) / scale) of total degree <= degree."""
    center: np.ndarray
    scale: float
    degree: int

    @property
    def dimension(self) -> int:
        return (self.degree + 1) * (self.degree + 2) // 2

    def _scaled(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - self.center) / self.scale

    def values(self, points: np.ndarray) -> np.ndarray:
        x = self._scaled(points)
        return np.column_stack([x[:, 0] ** a * x[:, 1] ** b
                                for a, b in monomial_exponents(self.degree)])

    def gradients(self, points: np.ndarray) -> np.ndarray:
        """Gradients with shape (nodes, dimension, 2)."""
        x = self._scaled(points)
        grads = np.zeros((x.shape[0], self.dimension, 2))
        for i, (a, b) in enumerate(monomial_exponents(self.degree)):
            if a > 0:
                grads[:, i, 0] = a * x[:, 0] ** (a - 1) * x[:, 1] ** b / self.scale
            if b > 0:
                grads[:, i, 1] = b * x[:, 0] ** a * x[:, 1] ** (b - 1) / self.scale
        return grads


@dataclass(frozen=True)
class FaceBasis:
    """Monomials of the arclength coordinate centred at the face midpoint."""
    origin: np.ndarray
    tangent: np.ndarray
    scale: float
    degree: int

    @property
    def dimension(self) -> int:
        return self.degree + 1

    def values(self, points: np.ndarray) -> np.ndarray:
        s = (np.atleast_2d(points) - self.origin) @ self.tangent / self.scale
        return np.column_stack([s ** k for k in range(self.degree + 1)])


def gram_matrix(basis, quad: QuadRule) -> np.ndarray:
    values = basis.values(quad.points)
    return values.T @ (quad.weights[:, None] * values)


def _cholesky(matrix: np.ndarray, what: str):
    try:
        return linalg.cho_factor(matrix)
    except linalg.LinAlgError as exc:
        raise GeometryError(f"Singular {what} (degenerate geometry): {exc}") from exc


def project_values(basis, quad: QuadRule, values: np.ndarray) -> np.ndarray:
    """L2 projection coefficients of node values (nodes, ...) onto `basis`."""
    phi = basis.values(quad.points)
    rhs = np.tensordot(phi * quad.weights[:, None], values, axes=(0, 0))
    return linalg.cho_solve(_cholesky(gram_matrix(basis, quad), "Gram matrix"), rhs)


def l2_project(f: Callable[[np.ndarray], np.ndarray], basis, quad: QuadRule) -> np.ndarray:
    """Best L2 approximation of a pointwise-evaluable field in the span of `basis`."""
    return project_values(basis, quad, np.asarray(f(quad.points), dtype=float))


def projection_matrix(target, quad: QuadRule, source_values: np.ndarray) -> np.ndarray:
    """Matrix mapping source coefficients to projected target coefficients.

    `source_values` holds the source basis evaluated at the quadrature nodes,
    shape (nodes, source dimension).
    """
    return project_values(target, quad, source_values)
