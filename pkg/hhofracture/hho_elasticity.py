"""
Local Elastic HHO Operators
Strain and divergence reconstructions, the quadratic displacement
reconstruction, both stabilizations, the local elastic matrix and static
condensation of the cell unknowns.

Local displacement unknowns are ordered cell block first, component-major:
cell coefficient (c, i) sits at c*3 + i and face coefficient (f, c, j) at
6 + 4*f + 2*c + j.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import partial
from typing import Callable, List

import numpy as np
from scipy import linalg

from .energy import MaterialParams
from .errors import GeometryError, SolverError
from .functional import (DEFAULT_CELL_DEGREE, CellBasis, QuadRule, cell_quadrature,
                         face_quadrature, gram_matrix, project_values)
from .mesh import Mesh

logger = logging.getLogger(__name__)

# Symmetric 2x2 basis: xx, yy and the off-diagonal pair
SYM_BASIS = np.array([
    [[1.0, 0.0], [0.0, 0.0]],
    [[0.0, 0.0], [0.0, 1.0]],
    [[0.0, 1.0], [1.0, 0.0]],
])
# Frobenius product of strains stored as [xx, yy, xy]
FROBENIUS = np.array([1.0, 1.0, 2.0])

CELL_DOFS = 6
FACE_DOFS = 4


class StabilizationVariant(str, Enum):
    """Least-squares penalty of the reconstruction defects."""
    FACE_DIFFERENCE = "face-difference"
    CELL_PLUS_FACE = "cell-plus-face"


@dataclass(frozen=True)
class LocalElasticOperators:
    """Matrices of one cell, all acting on the local displacement unknowns."""
    strain: np.ndarray          # (9, n) coefficients in Sym-P1
    divergence: np.ndarray      # (3, n) coefficients in P1
    reconstruction: np.ndarray  # (12, n) coefficients in P2^2
    stabilization: np.ndarray   # (n, n)
    matrix: np.ndarray          # (n, n) undegraded a_T
    schur: np.ndarray           # (n-6, n-6) for unit degradation
    recovery: np.ndarray        # (6, n-6) cell unknowns from face unknowns
    strain_nodes: np.ndarray    # (nodes, 3) P1 basis values at the quadrature nodes
    quad: QuadRule

    @property
    def n_dofs(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class CondensedElastic:
    """Schur complement on face unknowns and the maps recovering the cell unknowns."""
    schur: np.ndarray
    recovery: np.ndarray
    load_recovery: np.ndarray

    def recover(self, face_values: np.ndarray, cell_load=None) -> np.ndarray:
        cell = self.recovery @ face_values
        if cell_load is not None:
            cell = cell + self.load_recovery @ cell_load
        return cell


def _sym_gradient_p2(basis2: CellBasis, points: np.ndarray) -> np.ndarray:
    """Symmetric gradients [xx, yy, xy] of the P2^2 basis, shape (nodes, 12, 3)."""
    grads = basis2.gradients(points)
    nq, nb = grads.shape[0], grads.shape[1]
    sg = np.zeros((nq, 2 * nb, 3))
    sg[:, :nb, 0] = grads[..., 0]
    sg[:, :nb, 2] = 0.5 * grads[..., 1]
    sg[:, nb:, 1] = grads[..., 1]
    sg[:, nb:, 2] = 0.5 * grads[..., 0]
    return sg


class ElasticCell:
    """Quadratures and bases of one cell, with builders for its HHO operators."""

    def __init__(self, mesh: Mesh, index: int, degree: int = DEFAULT_CELL_DEGREE):
        self.geometry = geom = mesh.cell(index)
        self.quad = cell_quadrature(geom, degree)
        self.basis1 = CellBasis(geom.centroid, geom.diameter, 1)
        self.basis2 = CellBasis(geom.centroid, geom.diameter, 2)
        self.face_bases = [mesh.face_basis(int(f)) for f in geom.faces]
        self.face_quads = [face_quadrature(*geom.edge(j), degree) for j in range(geom.n_faces)]
        self.n_faces = geom.n_faces
        self.n_dofs = CELL_DOFS + FACE_DOFS * self.n_faces
        self.cell_mass = gram_matrix(self.basis1, self.quad)

    def face_slice(self, j: int) -> slice:
        start = CELL_DOFS + FACE_DOFS * j
        return slice(start, start + FACE_DOFS)

    def interpolate(self, field: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Local unknowns of a vector field: L2 projections on the cell and each face."""
        dofs = np.empty(self.n_dofs)
        dofs[:CELL_DOFS] = project_values(self.basis1, self.quad, field(self.quad.points)).T.ravel()
        for j, (basis, fq) in enumerate(zip(self.face_bases, self.face_quads)):
            dofs[self.face_slice(j)] = project_values(basis, fq, field(fq.points)).T.ravel()
        return dofs

    def strain_reconstruction(self) -> np.ndarray:
        """Matrix of E_T: local unknowns -> Sym-P1 coefficients (9 rows)."""
        q = self.quad
        v1 = self.basis1.values(q.points)
        g1 = self.basis1.gradients(q.points)
        rhs = np.zeros((9, self.n_dofs))

        cell_moments = np.einsum("q,qj,qib->jib", q.weights, v1, g1)
        rhs[:, :CELL_DOFS] = -np.einsum("kcb,jib->kicj", SYM_BASIS, cell_moments).reshape(9, CELL_DOFS)

        for j, (basis, fq) in enumerate(zip(self.face_bases, self.face_quads)):
            face_moments = (fq.weights[:, None] * basis.values(fq.points)).T @ self.basis1.values(fq.points)
            traction = SYM_BASIS @ self.geometry.normals[j]
            rhs[:, self.face_slice(j)] = np.einsum("kc,ji->kicj", traction, face_moments).reshape(9, FACE_DOFS)

        mass = np.kron(np.diag(FROBENIUS), self.cell_mass)
        try:
            return linalg.cho_solve(linalg.cho_factor(mass), rhs)
        except linalg.LinAlgError as exc:
            raise GeometryError(f"Singular strain mass matrix on cell {self.geometry.index}") from exc

    @staticmethod
    def divergence(strain: np.ndarray) -> np.ndarray:
        """Trace of the strain reconstruction, P1 coefficients."""
        return strain[0:3] + strain[3:6]

    def strain_at_nodes(self, strain: np.ndarray) -> np.ndarray:
        """Strain matrix evaluated at the quadrature nodes, shape (nodes, 3, n)."""
        v1 = self.basis1.values(self.quad.points)
        return np.stack([v1 @ strain[0:3], v1 @ strain[3:6], v1 @ strain[6:9]], axis=1)

    def displacement_reconstruction(self, strain: np.ndarray) -> np.ndarray:
        """Matrix of p2_T: local unknowns -> P2^2 coefficients (12 rows)."""
        q = self.quad
        sg = _sym_gradient_p2(self.basis2, q.points)
        v1 = self.basis1.values(q.points)
        tau = np.zeros((len(q), 9, 3))
        for k in range(3):
            tau[:, 3 * k:3 * k + 3, k] = v1

        stiffness = np.einsum("q,qas,s,qbs->ab", q.weights, sg, FROBENIUS, sg)
        coupling = np.einsum("q,qas,s,qks->ak", q.weights, sg, FROBENIUS, tau)

        grads2 = self.basis2.gradients(q.points)
        constraint = np.zeros((3, 12))
        constraint[0, :6] = q.integrate(self.basis2.values(q.points))
        constraint[1, 6:] = constraint[0, :6]
        constraint[2, :6] = 0.5 * q.integrate(grads2[..., 1])
        constraint[2, 6:] = -0.5 * q.integrate(grads2[..., 0])

        closure = np.zeros((3, self.n_dofs))
        cell_means = q.integrate(v1)
        closure[0, 0:3] = cell_means
        closure[1, 3:6] = cell_means
        for j, (basis, fq) in enumerate(zip(self.face_bases, self.face_quads)):
            nx, ny = self.geometry.normals[j]
            moments = fq.integrate(basis.values(fq.points))
            s = self.face_slice(j)
            closure[2, s.start:s.start + 2] = 0.5 * ny * moments
            closure[2, s.start + 2:s.stop] = -0.5 * nx * moments

        saddle = np.zeros((15, 15))
        saddle[:12, :12] = stiffness
        saddle[:12, 12:] = constraint.T
        saddle[12:, :12] = constraint
        rhs = np.vstack([coupling @ strain, closure])
        try:
            return linalg.solve(saddle, rhs)[:12]
        except linalg.LinAlgError as exc:
            raise GeometryError(f"Singular reconstruction closure on cell {self.geometry.index}") from exc

    def stabilization_matrix(self, reconstruction: np.ndarray,
                             variant: StabilizationVariant = StabilizationVariant.FACE_DIFFERENCE) -> np.ndarray:
        """Least-squares penalty of the cell and face reconstruction defects."""
        variant = StabilizationVariant(variant)
        eye2 = np.eye(2)
        cell_proj = np.kron(eye2, project_values(self.basis1, self.quad, self.basis2.values(self.quad.points)))
        delta_cell = cell_proj @ reconstruction
        delta_cell[:, :CELL_DOFS] -= np.eye(CELL_DOFS)

        stab = np.zeros((self.n_dofs, self.n_dofs))
        if variant is StabilizationVariant.CELL_PLUS_FACE:
            stab += delta_cell.T @ np.kron(eye2, self.cell_mass) @ delta_cell / self.geometry.diameter ** 2

        for j, (basis, fq) in enumerate(zip(self.face_bases, self.face_quads)):
            face_proj = np.kron(eye2, project_values(basis, fq, self.basis2.values(fq.points)))
            delta_face = face_proj @ reconstruction
            delta_face[:, self.face_slice(j)] -= np.eye(FACE_DOFS)
            if variant is StabilizationVariant.FACE_DIFFERENCE:
                trace = np.kron(eye2, project_values(basis, fq, self.basis1.values(fq.points)))
                delta_face = delta_face - trace @ delta_cell
            face_mass = np.kron(eye2, gram_matrix(basis, fq))
            stab += delta_face.T @ face_mass @ delta_face / self.geometry.face_lengths[j]
        return stab


def condense_elastic(matrix: np.ndarray, degradation: float = 1.0) -> CondensedElastic:
    """Eliminate the cell unknowns of g * A_T."""
    a_tt = matrix[:CELL_DOFS, :CELL_DOFS]
    a_tf = matrix[:CELL_DOFS, CELL_DOFS:]
    a_ff = matrix[CELL_DOFS:, CELL_DOFS:]
    try:
        factor = linalg.cho_factor(a_tt)
    except linalg.LinAlgError as exc:
        raise SolverError("Cell block of the local elastic matrix is not positive definite") from exc
    solved = linalg.cho_solve(factor, np.hstack([a_tf, np.eye(CELL_DOFS)]))
    recovery = -solved[:, :-CELL_DOFS]
    inverse = solved[:, -CELL_DOFS:]
    schur = a_ff + a_tf.T @ recovery
    schur = 0.5 * (schur + schur.T)
    return CondensedElastic(
        schur=degradation * schur,
        recovery=recovery,
        load_recovery=inverse / degradation,
    )


def local_elastic_matrix(mesh: Mesh, index: int, params: MaterialParams,
                         variant: StabilizationVariant = StabilizationVariant.FACE_DIFFERENCE,
                         degree: int = DEFAULT_CELL_DEGREE) -> LocalElasticOperators:
    """Build every elastic operator of one cell."""
    cell = ElasticCell(mesh, index, degree)
    strain = cell.strain_reconstruction()
    divergence = cell.divergence(strain)
    reconstruction = cell.displacement_reconstruction(strain)
    stab = cell.stabilization_matrix(reconstruction, variant)

    mu2 = 2.0 * params.lame_mu
    mass = np.kron(np.diag(FROBENIUS), cell.cell_mass)
    matrix = (mu2 * strain.T @ mass @ strain
              + params.lame_lambda * divergence.T @ cell.cell_mass @ divergence
              + mu2 * stab)
    matrix = 0.5 * (matrix + matrix.T)
    condensed = condense_elastic(matrix)
    return LocalElasticOperators(
        strain=strain,
        divergence=divergence,
        reconstruction=reconstruction,
        stabilization=stab,
        matrix=matrix,
        schur=condensed.schur,
        recovery=condensed.recovery,
        strain_nodes=cell.basis1.values(cell.quad.points),
        quad=cell.quad,
    )


def quadratic_energy(operators: LocalElasticOperators, dofs: np.ndarray) -> float:
    return float(dofs @ operators.matrix @ dofs)


def build_elastic_operators(mesh: Mesh, params: MaterialParams,
                            variant: StabilizationVariant = StabilizationVariant.FACE_DIFFERENCE,
                            executor=None) -> List[LocalElasticOperators]:
    """Local operators of every cell, optionally mapped over an executor."""
    build = partial(local_elastic_matrix, mesh, params=params, variant=variant)
    indices = range(mesh.n_cells)
    if executor is None:
        return [build(i) for i in indices]
    return list(executor.map(build, indices))
