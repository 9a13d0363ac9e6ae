"""
Staggered Phase-Field Solver
Global unknown management, sparse assembly of the statically condensed
mechanical and phase-field systems, SPD linear solves and the staggered
iteration of one pseudo-time step.

Cells are grouped into banks by face count so the per-iteration work
(degradation scaling, condensation of the phase field, recovery of cell
unknowns) runs as batched numpy operations.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import sparse
from scipy.sparse import linalg as spla

from .energy import MaterialParams, degradation
from .errors import ConfigError, ConvergenceError, SolverError
from .functional import DEFAULT_FACE_DEGREE, cell_quadrature, face_quadrature, l2_project
from .hho_elasticity import (CELL_DOFS, FACE_DOFS, StabilizationVariant,
                             build_elastic_operators)
from .hho_phasefield import build_phase_operators, cell_load, condense_phase, mass_coefficient, reaction_weight
from .history import (HistoryComparison, HistoryLayout, HistoryState, HistoryStorage,
                      update_history as advance_history)
from .mesh import Mesh

logger = logging.getLogger(__name__)

# Relative residual above which a linear solve is treated as broken down
RESIDUAL_BREAKDOWN = 1e-6
# Phase values outside this band are reported
PHASE_AUDIT_BAND = (-0.05, 1.05)


class LinearSolver(str, Enum):
    """Linear solver for the condensed SPD systems."""
    DIRECT = "direct"
    CG = "cg"


class SolverConfig(BaseModel):
    """Staggered iteration, linear solver and load stepping settings."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    tolerance: float = Field(1e-5, gt=0.0)
    max_iterations: int = Field(200, ge=1)
    accept_on_max: bool = False
    linear_solver: LinearSolver = LinearSolver.DIRECT
    linear_tolerance: float = Field(1e-10, gt=0.0)
    comparison: HistoryComparison = HistoryComparison.ITERATE
    history_storage: HistoryStorage = HistoryStorage.POLYNOMIAL
    stabilization: StabilizationVariant = StabilizationVariant.FACE_DIFFERENCE
    tau: float = Field(1.0, gt=0.0)
    n_steps: int = Field(10, ge=1)
    # [count, increment] rows; floats throughout so TOML arrays stay homogeneous
    schedule: List[Tuple[float, float]] = [(500.0, 1e-5), (1.0, 1e-6)]

    @field_validator("schedule")
    @classmethod
    def _check_schedule(cls, value):
        if not value:
            raise ValueError("schedule needs at least one [count, increment] entry")
        for count, increment in value:
            if count < 1 or count != int(count):
                raise ValueError(f"schedule count must be a positive integer, got {count}")
            if not np.isfinite(increment):
                raise ValueError(f"schedule increment must be finite, got {increment}")
        return value


class LoadSchedule:
    """Piecewise-constant load increments; the last entry repeats forever."""

    def __init__(self, table: Sequence[Tuple[int, float]]):
        if not table:
            raise ConfigError("Empty load schedule")
        self.table = [(int(n), float(d)) for n, d in table]

    def load(self, step: int) -> float:
        total, done = 0.0, 0
        for count, delta in self.table:
            take = min(count, step - done)
            if take <= 0:
                break
            total += take * delta
            done += take
        if step > done:
            total += (step - done) * self.table[-1][1]
        return total


@dataclass(frozen=True)
class DirichletBoundary:
    """Boundary part with fully prescribed displacement.

    The default profile is the rigid translation load * direction; a custom
    profile maps (points, load) to displacements.
    """
    name: str
    markers: Tuple[int, ...]
    direction: Tuple[float, float] = (0.0, 0.0)
    profile: Optional[Callable[[np.ndarray, float], np.ndarray]] = None

    def field(self, load: float) -> Callable[[np.ndarray], np.ndarray]:
        if self.profile is not None:
            return lambda x: self.profile(x, load)
        value = load * np.asarray(self.direction, dtype=float)
        return lambda x: np.broadcast_to(value, (np.atleast_2d(x).shape[0], 2))


class DofMap:
    """Face unknowns: 4 displacement and 1 phase value per face."""

    def __init__(self, mesh: Mesh, boundaries: Sequence[DirichletBoundary]):
        self.n_faces = mesh.n_faces
        self.boundaries = list(boundaries)
        self.group_faces: Dict[str, np.ndarray] = {}
        owner = np.full(mesh.n_faces, -1)
        for k, boundary in enumerate(self.boundaries):
            faces = mesh.faces_with_markers(boundary.markers)
            if faces.size == 0:
                raise ConfigError(f"Dirichlet boundary {boundary.name!r} matches no faces "
                                  f"(markers {list(boundary.markers)})")
            if not np.all(mesh.boundary_mask[faces]):
                raise ConfigError(f"Dirichlet boundary {boundary.name!r} contains internal faces")
            if np.any(owner[faces] >= 0):
                raise ConfigError(f"Dirichlet boundary {boundary.name!r} overlaps another one")
            owner[faces] = k
            self.group_faces[boundary.name] = faces
        self.dirichlet_faces = np.flatnonzero(owner >= 0)
        self.face_owner = owner
        mask = np.zeros(FACE_DOFS * mesh.n_faces, dtype=bool)
        mask[(FACE_DOFS * self.dirichlet_faces[:, None] + np.arange(FACE_DOFS)).ravel()] = True
        self.dirichlet_mask = mask
        self.free_dofs = np.flatnonzero(~mask)
        self.fixed_dofs = np.flatnonzero(mask)

    @property
    def n_displacement(self) -> int:
        return FACE_DOFS * self.n_faces

    @property
    def n_phase(self) -> int:
        return self.n_faces

    def dirichlet_values(self, mesh: Mesh, load: float) -> np.ndarray:
        """Face projections of the prescribed displacement at the fixed unknowns."""
        values = np.zeros(self.n_displacement)
        for boundary in self.boundaries:
            field_at = boundary.field(load)
            for f in self.group_faces[boundary.name]:
                a, b = mesh.vertices[mesh.face_vertices[f]]
                quad = face_quadrature(a, b, DEFAULT_FACE_DEGREE)
                coeff = l2_project(field_at, mesh.face_basis(int(f)), quad)
                values[FACE_DOFS * f:FACE_DOFS * (f + 1)] = coeff.T.ravel()
        fixed = values[self.fixed_dofs]
        if not np.all(np.isfinite(fixed)):
            raise SolverError("Non-finite prescribed displacement on a Dirichlet face")
        return fixed


@dataclass
class OperatorBank:
    """Stacked local operators of all cells with the same number of faces."""
    n_faces: int
    cells: np.ndarray
    elastic_schur: np.ndarray     # (nb, 4k, 4k)
    elastic_recovery: np.ndarray  # (nb, 6, 4k)
    strain: np.ndarray            # (nb, 9, 6 + 4k)
    displacement_dofs: np.ndarray  # (nb, 4k)
    phase_diffusion: np.ndarray   # (nb, 1 + k, 1 + k)
    phase_dofs: np.ndarray        # (nb, k)
    areas: np.ndarray


def _coo_pattern(dofs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    m = dofs.shape[1]
    rows = np.broadcast_to(dofs[:, :, None], (dofs.shape[0], m, m))
    cols = np.broadcast_to(dofs[:, None, :], (dofs.shape[0], m, m))
    return rows.ravel(), cols.ravel()


def solve_spd(matrix: sparse.spmatrix, rhs: np.ndarray, method: LinearSolver = LinearSolver.DIRECT,
              tolerance: float = 1e-10) -> np.ndarray:
    """Solve a sparse symmetric positive definite system and check the residual."""
    if rhs.size == 0:
        return np.zeros(0)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros_like(rhs)
    if LinearSolver(method) is LinearSolver.DIRECT:
        solution = spla.spsolve(matrix.tocsc(), rhs)
    else:
        diagonal = matrix.diagonal()
        if np.any(diagonal <= 0.0):
            raise SolverError("Non-positive diagonal entry in an SPD system")
        precond = sparse.diags(1.0 / diagonal)
        solution, info = spla.cg(matrix, rhs, rtol=tolerance, atol=0.0, M=precond,
                                 maxiter=20 * rhs.size)
        if info != 0:
            raise SolverError(f"Conjugate gradient did not converge (info={info})")
    solution = np.asarray(solution, dtype=float).reshape(rhs.shape)
    if not np.all(np.isfinite(solution)):
        raise SolverError("Linear solve produced non-finite values")
    residual = float(np.linalg.norm(matrix @ solution - rhs)) / rhs_norm
    logger.debug(f"Linear solve: n={rhs.size}, relative residual {residual:.3e}")
    if residual > RESIDUAL_BREAKDOWN:
        raise SolverError(f"Linear solver breakdown: relative residual {residual:.3e}")
    if residual > tolerance:
        logger.warning(f"Linear solve residual {residual:.3e} above tolerance {tolerance:.1e}")
    return solution


def relative_increment(new: np.ndarray, old: np.ndarray) -> float:
    """||new - old|| / max(||new||, machine epsilon)."""
    scale = max(float(np.linalg.norm(new)), np.finfo(float).eps)
    return float(np.linalg.norm(new - old)) / scale


def convergence_check(u_new: np.ndarray, u_old: np.ndarray, phi_new: np.ndarray,
                      phi_old: np.ndarray, tol: float) -> bool:
    """Both relative increments at most tol."""
    return relative_increment(u_new, u_old) <= tol and relative_increment(phi_new, phi_old) <= tol


@dataclass(frozen=True)
class StateFields:
    """Unknowns and history at one pseudo-time step."""
    u_cells: np.ndarray    # (nc, 6)
    u_faces: np.ndarray    # (4 nF,)
    phi_cells: np.ndarray  # (nc,)
    phi_faces: np.ndarray  # (nF,)
    history: HistoryState
    step: int = 0
    time: float = 0.0
    load: float = 0.0

    @property
    def displacement(self) -> np.ndarray:
        return np.concatenate([self.u_cells.ravel(), self.u_faces])

    @property
    def phase(self) -> np.ndarray:
        return np.concatenate([self.phi_cells, self.phi_faces])


@dataclass
class StepReport:
    """Outcome of one staggered step."""
    step: int
    load: float
    iterations: int
    converged: bool
    increments: Tuple[float, float]
    phi_range: Tuple[float, float]
    history_max: float = 0.0


def project_initial_phase(mesh: Mesh, phi0: Callable[[np.ndarray], np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Cell and face averages of an initial phase field."""
    cells = np.empty(mesh.n_cells)
    for i in range(mesh.n_cells):
        quad = cell_quadrature(mesh.cell(i))
        cells[i] = quad.integrate(np.asarray(phi0(quad.points), dtype=float)) / quad.measure
    faces = np.empty(mesh.n_faces)
    for f in range(mesh.n_faces):
        a, b = mesh.vertices[mesh.face_vertices[f]]
        quad = face_quadrature(a, b)
        faces[f] = quad.integrate(np.asarray(phi0(quad.points), dtype=float)) / quad.measure
    return cells, faces


class StaggeredSolver:
    """Alternating mechanical and phase-field solves on a fixed mesh."""

    def __init__(self, mesh: Mesh, params: MaterialParams, config: SolverConfig,
                 boundaries: Sequence[DirichletBoundary], threads: int = 1):
        self.mesh = mesh
        self.params = params
        self.config = config
        self.dofmap = DofMap(mesh, boundaries)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as executor:
                self.elastic = build_elastic_operators(mesh, params, config.stabilization, executor)
        else:
            self.elastic = build_elastic_operators(mesh, params, config.stabilization)
        self.phase = build_phase_operators(mesh)
        self.layout = HistoryLayout.from_operators(self.elastic)
        self.banks = self._build_banks()
        self._elastic_pattern = self._pattern(lambda b: b.displacement_dofs)
        self._phase_pattern = self._pattern(lambda b: b.phase_dofs)
        logger.info(f"Built local operators for {mesh.n_cells} cells in {len(self.banks)} banks "
                    f"({self.dofmap.n_displacement} displacement, {self.dofmap.n_phase} phase face unknowns)")

    def _build_banks(self) -> List[OperatorBank]:
        banks = []
        for k in np.unique(self.mesh.cell_n_faces):
            cells = np.flatnonzero(self.mesh.cell_n_faces == k)
            faces = np.stack([self.mesh.cell_faces[i] for i in cells])
            disp_dofs = (FACE_DOFS * faces[:, :, None] + np.arange(FACE_DOFS)).reshape(len(cells), -1)
            banks.append(OperatorBank(
                n_faces=int(k),
                cells=cells,
                elastic_schur=np.stack([self.elastic[i].schur for i in cells]),
                elastic_recovery=np.stack([self.elastic[i].recovery for i in cells]),
                strain=np.stack([self.elastic[i].strain for i in cells]),
                displacement_dofs=disp_dofs,
                phase_diffusion=np.stack([self.phase[i].diffusion for i in cells]),
                phase_dofs=faces,
                areas=self.mesh.cell_areas[cells],
            ))
        return banks

    def _pattern(self, dofs_of) -> Tuple[np.ndarray, np.ndarray]:
        rows, cols = zip(*(_coo_pattern(dofs_of(bank)) for bank in self.banks))
        return np.concatenate(rows), np.concatenate(cols)

    # Mechanical subproblem

    def elastic_matrix(self, phi_cells: np.ndarray) -> sparse.csr_matrix:
        """Condensed global elastic matrix with the degradation of the cell phase values."""
        g = degradation(phi_cells, self.params)
        data = np.concatenate([(g[bank.cells][:, None, None] * bank.elastic_schur).ravel()
                               for bank in self.banks])
        n = self.dofmap.n_displacement
        return sparse.coo_matrix((data, self._elastic_pattern), shape=(n, n)).tocsr()

    def recover_displacement(self, u_faces: np.ndarray) -> np.ndarray:
        u_cells = np.empty((self.mesh.n_cells, CELL_DOFS))
        for bank in self.banks:
            local = u_faces[bank.displacement_dofs]
            u_cells[bank.cells] = np.einsum("bij,bj->bi", bank.elastic_recovery, local)
        return u_cells

    def solve_mechanical(self, phi_cells: np.ndarray, load: float) -> Tuple[np.ndarray, np.ndarray]:
        """Displacement for the given phase cell values and load level."""
        matrix = self.elastic_matrix(phi_cells)
        dm = self.dofmap
        u_faces = np.zeros(dm.n_displacement)
        u_faces[dm.fixed_dofs] = dm.dirichlet_values(self.mesh, load)
        free = dm.free_dofs
        if free.size:
            rhs = -(matrix[free][:, dm.fixed_dofs] @ u_faces[dm.fixed_dofs])
            u_faces[free] = solve_spd(matrix[free][:, free], rhs,
                                      self.config.linear_solver, self.config.linear_tolerance)
        return self.recover_displacement(u_faces), u_faces

    def cell_strains(self, u_cells: np.ndarray, u_faces: np.ndarray) -> np.ndarray:
        """Sym-P1 strain coefficients of every cell, shape (nc, 9)."""
        strains = np.empty((self.mesh.n_cells, 9))
        for bank in self.banks:
            local = np.hstack([u_cells[bank.cells], u_faces[bank.displacement_dofs]])
            strains[bank.cells] = np.einsum("bij,bj->bi", bank.strain, local)
        return strains

    def face_residual(self, state: StateFields) -> np.ndarray:
        """g-weighted local forms tested with every face unknown."""
        return self.elastic_matrix(state.phi_cells) @ state.u_faces

    # Phase-field subproblem

    def solve_phase(self, history: HistoryState, phi_previous: np.ndarray,
                    tau: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Backward-Euler phase field driven by the history field."""
        tau = self.config.tau if tau is None else tau
        integral = history.driving_integral(self.layout)
        mass = mass_coefficient(self.params, tau)
        n = self.dofmap.n_phase
        rhs = np.zeros(n)
        data, condensed = [], []
        for bank in self.banks:
            h = integral[bank.cells]
            matrix = bank.phase_diffusion.copy()
            matrix[:, 0, 0] += reaction_weight(bank.areas, h, self.params)
            load = cell_load(bank.areas, h, phi_previous[bank.cells], self.params, tau)
            block = condense_phase(matrix, mass * bank.areas, load)
            data.append(block.schur.ravel())
            rhs += np.bincount(bank.phase_dofs.ravel(), weights=block.rhs.ravel(), minlength=n)
            condensed.append(block)
        matrix = sparse.coo_matrix((np.concatenate(data), self._phase_pattern), shape=(n, n)).tocsr()
        phi_faces = solve_spd(matrix, rhs, self.config.linear_solver, self.config.linear_tolerance)
        phi_cells = np.empty(self.mesh.n_cells)
        for bank, block in zip(self.banks, condensed):
            phi_cells[bank.cells] = block.recover(phi_faces[bank.phase_dofs])
        return phi_cells, phi_faces

    # Staggered iteration

    def initial_state(self, history: Optional[HistoryState] = None,
                      phi: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> StateFields:
        nc, nf = self.mesh.n_cells, self.mesh.n_faces
        phi_cells, phi_faces = phi if phi is not None else (np.zeros(nc), np.zeros(nf))
        return StateFields(
            u_cells=np.zeros((nc, CELL_DOFS)),
            u_faces=np.zeros(self.dofmap.n_displacement),
            phi_cells=np.asarray(phi_cells, dtype=float),
            phi_faces=np.asarray(phi_faces, dtype=float),
            history=history if history is not None else HistoryState.zero(self.layout),
        )

    def staggered_step(self, state: StateFields, load: float, tau: Optional[float] = None,
                       update_history: bool = True) -> Tuple[StateFields, StepReport]:
        """Advance one pseudo-time step from an accepted state."""
        cfg = self.config
        tau = cfg.tau if tau is None else tau
        committed = state.history
        history = committed
        u_cells, u_faces = state.u_cells, state.u_faces
        phi_cells, phi_faces = state.phi_cells, state.phi_faces
        increments = (np.inf, np.inf)
        converged = False

        for iteration in range(1, cfg.max_iterations + 1):
            new_u_cells, new_u_faces = self.solve_mechanical(phi_cells, load)
            if update_history:
                strains = self.cell_strains(new_u_cells, new_u_faces)
                history = advance_history(history, self.layout, strains, self.params,
                                         cfg.comparison, committed, cfg.history_storage)
            new_phi_cells, new_phi_faces = self.solve_phase(history, state.phi_cells, tau)

            u_new = np.concatenate([new_u_cells.ravel(), new_u_faces])
            u_old = np.concatenate([u_cells.ravel(), u_faces])
            phi_new = np.concatenate([new_phi_cells, new_phi_faces])
            phi_old = np.concatenate([phi_cells, phi_faces])
            increments = (relative_increment(u_new, u_old), relative_increment(phi_new, phi_old))
            logger.debug(f"Step {state.step + 1} iteration {iteration}: "
                         f"du={increments[0]:.3e} dphi={increments[1]:.3e}")
            converged = convergence_check(u_new, u_old, phi_new, phi_old, cfg.tolerance)

            u_cells, u_faces = new_u_cells, new_u_faces
            phi_cells, phi_faces = new_phi_cells, new_phi_faces
            if converged:
                break

        step = state.step + 1
        if not converged:
            message = (f"Staggered iterations did not converge at step {step} after "
                       f"{cfg.max_iterations} iterations (du={increments[0]:.3e}, dphi={increments[1]:.3e})")
            if not cfg.accept_on_max:
                raise ConvergenceError(message, step=step, increments=increments)
            logger.warning(message + "; accepting the last iterate")

        phase = np.concatenate([phi_cells, phi_faces])
        phi_range = (float(phase.min()), float(phase.max()))
        if phi_range[0] < PHASE_AUDIT_BAND[0] or phi_range[1] > PHASE_AUDIT_BAND[1]:
            logger.warning(f"Phase field outside [{PHASE_AUDIT_BAND[0]}, {PHASE_AUDIT_BAND[1]}] "
                           f"at step {step}: min {phi_range[0]:.4f}, max {phi_range[1]:.4f}")

        new_state = replace(state, u_cells=u_cells, u_faces=u_faces, phi_cells=phi_cells,
                            phi_faces=phi_faces, history=history, step=step,
                            time=state.time + tau, load=load)
        report = StepReport(step=step, load=load, iterations=iteration, converged=converged,
                            increments=increments, phi_range=phi_range,
                            history_max=float(history.energy_max.max(initial=0.0)))
        return new_state, report
