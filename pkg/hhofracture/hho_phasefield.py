"""
Local Phase-Field HHO Operators
Affine reconstruction from one cell value and one value per face, its
stabilization, the reaction-diffusion matrix weighted by the history field
and the elimination of the cell unknown.
"""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from .energy import MaterialParams
from .errors import SolverError
from .mesh import CellGeometry, Mesh

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AffineField:
    """phi(x) = value + gradient . (x - center)."""
    value: float
    gradient: np.ndarray
    center: np.ndarray

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.value + (np.atleast_2d(points) - self.center) @ self.gradient


@dataclass(frozen=True)
class LocalPhaseOperators:
    """History-independent part of the local phase-field problem."""
    gradient: np.ndarray       # (2, n) gradient of the affine reconstruction
    stabilization: np.ndarray  # (n, n)
    diffusion: np.ndarray      # (n, n) |T| G^T G + J
    area: float

    @property
    def n_dofs(self) -> int:
        return self.diffusion.shape[0]


@dataclass(frozen=True)
class CondensedPhase:
    """Face system of one or many cells after eliminating the cell value."""
    schur: np.ndarray
    rhs: np.ndarray
    coupling: np.ndarray
    pivot: np.ndarray
    load: np.ndarray

    def recover(self, face_values: np.ndarray) -> np.ndarray:
        """Cell values from face values, shape (..., n_faces)."""
        return (self.load - np.einsum("...f,...f->...", self.coupling, face_values)) / self.pivot


def phase_gradient(geom: CellGeometry) -> np.ndarray:
    grad = np.zeros((2, 1 + geom.n_faces))
    grad[:, 1:] = (geom.face_lengths[:, None] * geom.normals).T / geom.area
    return grad


def phase_reconstruction(geom: CellGeometry, dofs: np.ndarray) -> AffineField:
    """Affine field with the cell value at the centroid and the face-flux gradient."""
    dofs = np.asarray(dofs, dtype=float)
    return AffineField(float(dofs[0]), phase_gradient(geom) @ dofs, geom.centroid)


def phase_stabilization(geom: CellGeometry) -> np.ndarray:
    """Sum over faces of (1/(h_T |F|)) (int_F p phi - phi_F)(int_F p chi - chi_F)."""
    n = 1 + geom.n_faces
    grad = phase_gradient(geom)
    stab = np.zeros((n, n))
    for j in range(geom.n_faces):
        length = geom.face_lengths[j]
        row = length * (geom.face_midpoints[j] - geom.centroid) @ grad
        row[0] += length
        row[1 + j] -= length
        stab += np.outer(row, row) / (geom.diameter * length)
    return stab


def local_phase_operators(geom: CellGeometry) -> LocalPhaseOperators:
    grad = phase_gradient(geom)
    stab = phase_stabilization(geom)
    diffusion = geom.area * grad.T @ grad + stab
    return LocalPhaseOperators(grad, stab, 0.5 * (diffusion + diffusion.T), geom.area)


def build_phase_operators(mesh: Mesh) -> List[LocalPhaseOperators]:
    return [local_phase_operators(mesh.cell(i)) for i in range(mesh.n_cells)]


def reaction_weight(area, history_integral, params: MaterialParams):
    """|T|/l^2 + (2/(l Gc)) int_T H on the cell-cell entry."""
    ell, gc = params.length_scale, params.energy_release_rate
    weight = np.asarray(area) / ell ** 2 + 2.0 / (ell * gc) * np.asarray(history_integral)
    if np.any(weight < 0.0):
        raise SolverError("Negative phase-field reaction weight (corrupted history field)")
    return weight


def local_phase_matrix(operators: LocalPhaseOperators, history_integral: float,
                       params: MaterialParams) -> np.ndarray:
    """Diffusion, stabilization and history-weighted reaction of one cell."""
    matrix = operators.diffusion.copy()
    matrix[0, 0] += reaction_weight(operators.area, history_integral, params)
    return matrix


def mass_coefficient(params: MaterialParams, tau: float) -> float:
    """eta / (l Gc tau), zero for the rate-independent problem."""
    if params.viscosity == 0.0:
        return 0.0
    if tau <= 0.0:
        raise SolverError(f"Non-positive pseudo-time increment {tau}")
    return params.viscosity / (params.length_scale * params.energy_release_rate * tau)


def cell_load(area, history_integral, phi_previous, params: MaterialParams, tau: float):
    """(2/(l Gc)) int_T H + (eta/(l Gc tau)) |T| phi_n."""
    ell, gc = params.length_scale, params.energy_release_rate
    return (2.0 / (ell * gc) * np.asarray(history_integral)
            + mass_coefficient(params, tau) * np.asarray(area) * np.asarray(phi_previous))


def condense_phase(matrix: np.ndarray, mass, load) -> CondensedPhase:
    """Eliminate the cell value of (matrix + mass e0 e0^T); works on stacked cells."""
    matrix = np.asarray(matrix, dtype=float)
    pivot = matrix[..., 0, 0] + np.asarray(mass, dtype=float)
    if np.any(pivot <= 0.0):
        raise SolverError("Zero pivot while condensing the phase-field cell unknown")
    load = np.asarray(load, dtype=float)
    coupling = matrix[..., 1:, 0]
    schur = matrix[..., 1:, 1:] - coupling[..., :, None] * coupling[..., None, :] / pivot[..., None, None]
    rhs = -coupling * (load / pivot)[..., None]
    return CondensedPhase(schur=schur, rhs=rhs, coupling=coupling, pivot=pivot, load=load)
