"""
Benchmark Runs
Builds the mesh, boundary conditions and notch of a run configuration, drives
the pseudo-time loop, and post-processes reaction forces and crack bands.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .config import NotchMode, RunConfig, config_to_toml, parse_config, with_overrides
from .errors import ConfigError, ConvergenceError
from .history import HistoryState, init_history_notch, initial_history_from_field, notch_band
from .mesh import (BoundaryCondition, BoundaryGroup, Mesh, cut_notch, format_mesh, parse_mesh,
                   partition_boundary, read_mesh)
from .output import (LoadDisplacementLog, checkpoint_name, export_vtk, load_checkpoint,
                     save_checkpoint, snapshot_name)
from .presets import build_preset_mesh
from .solver import (DirichletBoundary, LoadSchedule, StaggeredSolver, StateFields, StepReport,
                     project_initial_phase)

logger = logging.getLogger(__name__)

# Default phase threshold of a fully developed crack band
CRACK_THRESHOLD = 0.95


@dataclass
class BenchmarkResult:
    """Artifacts and per-step records of a run."""
    csv_path: Path
    checkpoint_path: Optional[Path] = None
    snapshots: List[Path] = field(default_factory=list)
    reports: List[StepReport] = field(default_factory=list)
    forces: List[np.ndarray] = field(default_factory=list)
    final_state: Optional[StateFields] = None
    mesh: Optional[Mesh] = None


def reaction_force(solver: StaggeredSolver, state: StateFields, faces: Iterable[int]) -> np.ndarray:
    """Resultant of the face residuals over the constant modes of the given faces."""
    faces = np.asarray(list(faces), dtype=np.int64)
    if faces.size == 0:
        raise ConfigError("Reaction force requested on a boundary group without faces")
    residual = solver.face_residual(state)
    return np.array([residual[4 * faces].sum(), residual[4 * faces + 2].sum()])


def boundary_length(mesh: Mesh, faces: Iterable[int]) -> float:
    return float(mesh.face_lengths[np.asarray(list(faces), dtype=np.int64)].sum())


def crack_band_cells(mesh: Mesh, phi_cells: np.ndarray, start,
                     threshold: float = CRACK_THRESHOLD) -> np.ndarray:
    """Cells of the band with phi above threshold that contains the start point.

    Cells are connected through internal faces; the band starts at cells within
    one cell diameter of `start`.
    """
    cracked = np.asarray(phi_cells) > threshold
    internal = mesh.internal_faces
    c0, c1 = mesh.face_cells[internal, 0], mesh.face_cells[internal, 1]
    keep = cracked[c0] & cracked[c1]
    n = mesh.n_cells
    graph = sparse.coo_matrix((np.ones(int(keep.sum())), (c0[keep], c1[keep])), shape=(n, n))
    _, labels = csgraph.connected_components(graph, directed=False)

    dist = np.hypot(*(mesh.cell_centroids - np.asarray(start, dtype=float)).T)
    seeds = np.flatnonzero(cracked & (dist <= mesh.cell_diameters))
    return np.flatnonzero(cracked & np.isin(labels, labels[seeds]))


def crack_band_reaches(mesh: Mesh, phi_cells: np.ndarray, start, target_markers: Iterable[int],
                       threshold: float = CRACK_THRESHOLD) -> bool:
    """Whether the crack band from `start` touches a face with one of the target markers."""
    band = crack_band_cells(mesh, phi_cells, start, threshold)
    target_cells = mesh.face_cells[mesh.faces_with_markers(target_markers), 0]
    return bool(np.intersect1d(band, target_cells).size)


def load_mesh(config: RunConfig) -> Mesh:
    section = config.mesh
    if section.path is not None:
        return read_mesh(section.path)
    return build_preset_mesh(section.preset.value, section.cells_per_side, section.h_min,
                             section.h_max, section.growth)


def prepare_mesh(config: RunConfig) -> Mesh:
    """Mesh of the run with the notch cut when requested."""
    mesh = load_mesh(config)
    if config.notch.mode is NotchMode.MESH_CUT:
        mesh = cut_notch(mesh, config.notch.endpoints)
    return mesh


def dirichlet_boundaries(config: RunConfig, mesh: Mesh) -> List[DirichletBoundary]:
    """Loaded and fixed groups; every other marker of the mesh stays traction free."""
    loading = config.loading
    directions = {"loaded": tuple(loading.direction), "fixed": (0.0, 0.0)}
    groups = partition_boundary(mesh, [
        BoundaryGroup("loaded", frozenset(loading.loaded_markers), BoundaryCondition.DIRICHLET),
        BoundaryGroup("fixed", frozenset(loading.fixed_markers), BoundaryCondition.DIRICHLET),
    ])
    boundaries = []
    for group in groups:
        if group.condition is BoundaryCondition.DIRICHLET:
            boundaries.append(DirichletBoundary(group.name, tuple(sorted(group.markers)), directions[group.name]))
        else:
            logger.info(f"Traction-free boundary markers: {sorted(group.markers)}")
    return boundaries


def initial_phase(config: RunConfig, mesh: Mesh) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Cell and face averages of the initial phase band, or None for an intact body."""
    initial = config.initial
    if initial.phase == 0.0:
        return None
    width = initial.width or config.material.length_scale
    return project_initial_phase(mesh, lambda x: initial.phase * notch_band(x, config.notch.endpoints, width))


def initial_history(config: RunConfig, mesh: Mesh, solver: StaggeredSolver) -> HistoryState:
    if config.notch.mode is NotchMode.HISTORY_SEED:
        state = init_history_notch(mesh, solver.layout, config.notch.endpoints,
                                   config.notch.amplitude, config.material, config.notch.width)
    else:
        state = HistoryState.zero(solver.layout)
    initial = config.initial
    if initial.history > 0.0:
        width = initial.width or config.material.length_scale
        band = initial_history_from_field(
            solver.layout, mesh.cell_areas,
            lambda x: initial.history * notch_band(x, config.notch.endpoints, width))
        state = replace(state, initial=state.initial + band.initial)
    return state


def run_benchmark(config: RunConfig, threads: int = 1, mesh: Optional[Mesh] = None,
                  state: Optional[StateFields] = None) -> BenchmarkResult:
    """Run the pseudo-time loop of a configuration, optionally from a saved state."""
    out = config.output
    directory = Path(out.directory)
    directory.mkdir(parents=True, exist_ok=True)
    name = config.run.name

    if mesh is None:
        mesh = prepare_mesh(config)
    solver = StaggeredSolver(mesh, config.material, config.solver, dirichlet_boundaries(config, mesh), threads)
    resuming = state is not None
    if state is None:
        state = solver.initial_state(initial_history(config, mesh, solver), initial_phase(config, mesh))

    schedule = LoadSchedule(config.solver.schedule)
    loaded_faces = solver.dofmap.group_faces["loaded"]
    length = boundary_length(mesh, loaded_faces)
    config_text = config_to_toml(config)
    mesh_text = format_mesh(mesh)

    result = BenchmarkResult(csv_path=directory / out.csv_name, mesh=mesh)
    log = LoadDisplacementLog(result.csv_path, out.deterministic, append=resuming,
                              keep_through=state.step if resuming else None)
    try:
        for step in range(state.step + 1, config.solver.n_steps + 1):
            started = time.perf_counter()
            try:
                state, report = solver.staggered_step(state, schedule.load(step), config.solver.tau)
            except ConvergenceError:
                result.checkpoint_path = save_checkpoint(directory / checkpoint_name(name), state,
                                                         config_text, mesh_text)
                raise
            force = reaction_force(solver, state, loaded_faces)
            log.append(step, state.time, state.load, force, length, report.iterations,
                       time.perf_counter() - started)
            result.reports.append(report)
            result.forces.append(force)
            logger.info(f"Step {step}: load={state.load:.6e} iterations={report.iterations} "
                        f"|F|={np.hypot(*force):.6e} phi=[{report.phi_range[0]:.3f}, {report.phi_range[1]:.3f}]")

            if out.snapshot_every and step % out.snapshot_every == 0:
                average = state.history.driving_average(solver.layout, mesh.cell_areas)
                result.snapshots.append(export_vtk(state, mesh, directory / snapshot_name(name, step), average))
            if out.checkpoint_every and step % out.checkpoint_every == 0:
                save_checkpoint(directory / checkpoint_name(name, step), state, config_text, mesh_text)
    finally:
        log.close()

    result.checkpoint_path = save_checkpoint(directory / checkpoint_name(name), state, config_text, mesh_text)
    result.final_state = state
    return result


def resume_benchmark(path, overrides: Optional[dict] = None, threads: int = 1) -> BenchmarkResult:
    """Continue a run from a checkpoint; the embedded configuration and mesh are reused."""
    checkpoint = load_checkpoint(path)
    config = parse_config(checkpoint.config_text)
    if overrides:
        config = with_overrides(config, overrides)
    mesh = parse_mesh(checkpoint.mesh_text)
    if checkpoint.state.step >= config.solver.n_steps:
        logger.warning(f"Checkpoint already at step {checkpoint.state.step} of {config.solver.n_steps}")
    return run_benchmark(config, threads=threads, mesh=mesh, state=checkpoint.state)


def load_curve(result: BenchmarkResult) -> Tuple[np.ndarray, np.ndarray]:
    """Imposed displacement and resultant magnitude per step."""
    loads = np.array([r.load for r in result.reports])
    forces = np.array([np.hypot(*f) for f in result.forces])
    return loads, forces
