"""Tests for the dof map, global assembly, linear solves and the staggered step."""

from dataclasses import replace

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import sparse

from .conftest import SIDE_MARKERS, hexagon_patch
from .energy import MaterialParams, degradation
from .errors import ConfigError, ConvergenceError, SolverError
from .hho_phasefield import cell_load, mass_coefficient, reaction_weight
from .history import HistoryState
from .mesh import MARKER_LEFT, MARKER_RIGHT
from .presets import square_triangles
from .solver import (DirichletBoundary, DofMap, LinearSolver, LoadSchedule, SolverConfig,
                     StaggeredSolver, convergence_check, project_initial_phase,
                     relative_increment, solve_spd)

AFFINE = np.array([[1e-3, 2e-4], [-5e-4, 3e-4]])


def affine_profile(points, load):
    return load * (np.atleast_2d(points) @ AFFINE.T + np.array([1e-4, -2e-4]))


def tension_boundaries():
    return [DirichletBoundary("loaded", (MARKER_LEFT,), (-1.0, 0.0)),
            DirichletBoundary("fixed", (MARKER_RIGHT,), (0.0, 0.0))]


def laplacian(n):
    return sparse.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()


def test_load_schedule():
    schedule = LoadSchedule([(2, 1e-3), (1, 5e-4)])
    assert schedule.load(0) == 0.0
    assert schedule.load(3) == pytest.approx(2.5e-3)
    assert schedule.load(5) == pytest.approx(3.5e-3)
    with pytest.raises(ConfigError):
        LoadSchedule([])


def test_solver_config_validation():
    assert SolverConfig().schedule[0] == (500.0, 1e-5)
    with pytest.raises(ValidationError):
        SolverConfig(schedule=[])
    with pytest.raises(ValidationError):
        SolverConfig(schedule=[(0.5, 1e-3)])
    with pytest.raises(ValidationError):
        SolverConfig(schedule=[(1.0, float("nan"))])
    with pytest.raises(ValidationError):
        SolverConfig(tau=0.0)
    with pytest.raises(ValidationError):
        SolverConfig(linear_solver="lu")


def test_dofmap(tri_mesh):
    dm = DofMap(tri_mesh, tension_boundaries())
    assert dm.n_displacement == 4 * tri_mesh.n_faces
    assert dm.n_phase == tri_mesh.n_faces
    assert dm.dirichlet_faces.size == 8
    assert dm.fixed_dofs.size == 32
    assert dm.free_dofs.size + dm.fixed_dofs.size == dm.n_displacement
    assert np.array_equal(np.sort(dm.group_faces["loaded"]), tri_mesh.faces_with_markers([MARKER_LEFT]))


def test_dofmap_errors(tri_mesh):
    with pytest.raises(ConfigError, match="matches no faces"):
        DofMap(tri_mesh, [DirichletBoundary("ghost", (42,))])
    with pytest.raises(ConfigError, match="overlaps"):
        DofMap(tri_mesh, [DirichletBoundary("a", (MARKER_LEFT,)), DirichletBoundary("b", (MARKER_LEFT, MARKER_RIGHT))])


def test_dirichlet_values_translation(tri_mesh):
    dm = DofMap(tri_mesh, tension_boundaries())
    values = np.zeros(dm.n_displacement)
    values[dm.fixed_dofs] = dm.dirichlet_values(tri_mesh, 2e-3)
    for f in dm.group_faces["loaded"]:
        assert values[4 * f:4 * f + 4] == pytest.approx([-2e-3, 0.0, 0.0, 0.0], abs=1e-15)
    for f in dm.group_faces["fixed"]:
        assert np.all(values[4 * f:4 * f + 4] == 0.0)


def test_solve_spd_direct_and_cg():
    matrix = laplacian(30)
    rhs = np.linspace(-1.0, 2.0, 30)
    direct = solve_spd(matrix, rhs)
    iterative = solve_spd(matrix, rhs, LinearSolver.CG, tolerance=1e-12)
    assert matrix @ direct == pytest.approx(rhs, abs=1e-10)
    assert iterative == pytest.approx(direct, rel=1e-8, abs=1e-9)
    assert np.array_equal(solve_spd(matrix, np.zeros(30)), np.zeros(30))
    assert solve_spd(matrix[:0, :0], np.zeros(0)).size == 0


def test_solve_spd_rejects_bad_diagonal():
    matrix = sparse.diags([1.0, -1.0]).tocsr()
    with pytest.raises(SolverError):
        solve_spd(matrix, np.ones(2), LinearSolver.CG)


def test_relative_increment_and_convergence_check():
    assert relative_increment(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_increment(np.array([2.0]), np.array([1.0])) == 0.5
    # exactly at the tolerance counts as converged
    assert convergence_check(np.array([1.0]), np.array([0.5]), np.array([1.0]), np.array([0.5]), 0.5)
    assert not convergence_check(np.array([1.0]), np.array([0.5]), np.array([1.0]), np.array([1.0]), 0.25)


@pytest.mark.parametrize("mesh_name", ["tri_mesh", "hex_mesh"])
def test_affine_patch(mesh_name, request, params):
    mesh = request.getfixturevalue(mesh_name)
    boundary = DirichletBoundary("all", SIDE_MARKERS, profile=affine_profile)
    solver = StaggeredSolver(mesh, params, SolverConfig(), [boundary])
    for phi in (0.0, 0.6):
        u_cells, u_faces = solver.solve_mechanical(np.full(mesh.n_cells, phi), 1.0)
        strains = solver.cell_strains(u_cells, u_faces)
        sym = 0.5 * (AFFINE + AFFINE.T)
        expected = np.zeros(9)
        expected[[0, 3, 6]] = sym[0, 0], sym[1, 1], sym[0, 1]
        assert strains == pytest.approx(np.tile(expected, (mesh.n_cells, 1)), abs=1e-12)
        # cell means are the field values at the centroids
        centroid_values = affine_profile(mesh.cell_centroids, 1.0)
        assert u_cells[:, 0] == pytest.approx(centroid_values[:, 0], abs=1e-12)
        assert u_cells[:, 3] == pytest.approx(centroid_values[:, 1], abs=1e-12)


def test_rigid_translation_has_zero_reaction(tri_mesh, params):
    boundaries = [DirichletBoundary("loaded", (MARKER_LEFT,), (1.0, 0.5)),
                  DirichletBoundary("fixed", (MARKER_RIGHT,), (1.0, 0.5))]
    solver = StaggeredSolver(tri_mesh, params, SolverConfig(), boundaries)
    u_cells, u_faces = solver.solve_mechanical(np.zeros(tri_mesh.n_cells), 1e-3)
    assert u_cells[:, 0] == pytest.approx(np.full(tri_mesh.n_cells, 1e-3))
    assert u_cells[:, 3] == pytest.approx(np.full(tri_mesh.n_cells, 5e-4))
    state = replace(solver.initial_state(), u_cells=u_cells, u_faces=u_faces)
    residual = solver.face_residual(state)
    assert residual == pytest.approx(np.zeros_like(residual), abs=1e-12)


def test_reactions_balance_in_tension(tri_mesh, params):
    solver = StaggeredSolver(tri_mesh, params, SolverConfig(), tension_boundaries())
    state, report = solver.staggered_step(solver.initial_state(), 1e-3)
    assert report.converged
    residual = solver.face_residual(state)
    left = residual[4 * solver.dofmap.group_faces["loaded"]].sum()
    right = residual[4 * solver.dofmap.group_faces["fixed"]].sum()
    assert left < 0.0
    assert left == pytest.approx(-right, rel=1e-4)
    free = residual[solver.dofmap.free_dofs]
    assert np.abs(free).max() < 1e-4 * abs(left)


def test_uniform_history_phase(tri_mesh, params):
    solver = StaggeredSolver(tri_mesh, params, SolverConfig(), tension_boundaries())
    h = params.energy_release_rate / (2.0 * params.length_scale)
    history = HistoryState.zero(solver.layout, np.full(tri_mesh.n_cells, h))
    phi_cells, phi_faces = solver.solve_phase(history, np.zeros(tri_mesh.n_cells))
    assert phi_cells == pytest.approx(np.full(tri_mesh.n_cells, 0.5), rel=1e-9)
    assert phi_faces == pytest.approx(np.full(tri_mesh.n_faces, 0.5), rel=1e-9)


def test_zero_load_step_converges_immediately(tri_mesh, params):
    solver = StaggeredSolver(tri_mesh, params, SolverConfig(), tension_boundaries())
    state, report = solver.staggered_step(solver.initial_state(), 0.0)
    assert report.converged
    assert report.iterations == 1
    assert state.step == 1
    assert state.time == pytest.approx(1.0)
    assert np.all(state.phase == 0.0)


def test_tension_step_drives_phase_field(tri_mesh, params):
    solver = StaggeredSolver(tri_mesh, params, SolverConfig(), tension_boundaries())
    state, report = solver.staggered_step(solver.initial_state(), 5e-3)
    assert report.converged
    assert report.history_max > 0.0
    assert -1e-3 < report.phi_range[0] <= report.phi_range[1] < 1.0
    assert state.phi_cells.max() > 0.0
    following, _ = solver.staggered_step(state, 5e-3)
    # the history only grows, so the phase field cannot heal
    assert np.all(following.history.energy_max >= state.history.energy_max)


def test_unconverged_step(tri_mesh, params):
    strict = StaggeredSolver(tri_mesh, params, SolverConfig(max_iterations=1), tension_boundaries())
    with pytest.raises(ConvergenceError) as info:
        strict.staggered_step(strict.initial_state(), 1e-3)
    assert info.value.step == 1
    assert info.value.exit_code == 3

    lenient = StaggeredSolver(tri_mesh, params, SolverConfig(max_iterations=1, accept_on_max=True),
                              tension_boundaries())
    state, report = lenient.staggered_step(lenient.initial_state(), 1e-3)
    assert not report.converged
    assert state.step == 1


def test_threaded_assembly_matches_serial(hex_mesh, params):
    serial = StaggeredSolver(hex_mesh, params, SolverConfig(), tension_boundaries())
    threaded = StaggeredSolver(hex_mesh, params, SolverConfig(), tension_boundaries(), threads=2)
    phi = np.linspace(0.0, 0.9, hex_mesh.n_cells)
    difference = serial.elastic_matrix(phi) - threaded.elastic_matrix(phi)
    assert abs(difference).max() == 0.0
    assert {bank.n_faces for bank in serial.banks} == set(np.unique(hex_mesh.cell_n_faces))


def test_viscous_step_is_bounded(tri_mesh):
    params = MaterialParams(viscosity=1e-4)
    solver = StaggeredSolver(tri_mesh, params, SolverConfig(tau=0.5), tension_boundaries())
    state, report = solver.staggered_step(solver.initial_state(), 5e-3)
    assert report.converged
    assert state.time == pytest.approx(0.5)
    assert -1e-3 < report.phi_range[0] <= report.phi_range[1] < 1.0


def test_project_initial_phase(tri_mesh):
    cells, faces = project_initial_phase(tri_mesh, lambda x: np.full(x.shape[0], 0.3))
    assert cells == pytest.approx(np.full(tri_mesh.n_cells, 0.3))
    assert faces == pytest.approx(np.full(tri_mesh.n_faces, 0.3))


def monolithic_mechanical(solver, phi_cells, load):
    """Dense solve of all cell and face displacement unknowns together."""
    mesh = solver.mesh
    nc = mesh.n_cells
    n = 6 * nc + solver.dofmap.n_displacement
    matrix = np.zeros((n, n))
    g = degradation(phi_cells, solver.params)
    for i, ops in enumerate(solver.elastic):
        faces = mesh.cell_faces[i]
        dofs = np.concatenate([6 * i + np.arange(6), 6 * nc + (4 * faces[:, None] + np.arange(4)).ravel()])
        matrix[np.ix_(dofs, dofs)] += g[i] * ops.matrix
    fixed = 6 * nc + solver.dofmap.fixed_dofs
    free = np.setdiff1d(np.arange(n), fixed)
    values = np.zeros(n)
    values[fixed] = solver.dofmap.dirichlet_values(mesh, load)
    values[free] = np.linalg.solve(matrix[np.ix_(free, free)], -matrix[np.ix_(free, fixed)] @ values[fixed])
    return values[:6 * nc].reshape(nc, 6), values[6 * nc:]


def monolithic_phase(solver, history, phi_previous, tau):
    """Dense solve of all cell and face phase unknowns together."""
    mesh, params = solver.mesh, solver.params
    nc = mesh.n_cells
    n = nc + mesh.n_faces
    integral = history.driving_integral(solver.layout)
    mass = mass_coefficient(params, tau)
    matrix = np.zeros((n, n))
    rhs = np.zeros(n)
    for i, ops in enumerate(solver.phase):
        dofs = np.concatenate([[i], nc + mesh.cell_faces[i]])
        local = ops.diffusion.copy()
        area = mesh.cell_areas[i]
        local[0, 0] += reaction_weight(area, integral[i], params) + mass * area
        matrix[np.ix_(dofs, dofs)] += local
        rhs[i] += cell_load(area, integral[i], phi_previous[i], params, tau)
    values = np.linalg.solve(matrix, rhs)
    return values[:nc], values[nc:]


def small_problems():
    return [
        (square_triangles(2), tension_boundaries(), 1e-3),
        (hexagon_patch(), [DirichletBoundary("all", (5,), profile=affine_profile)], 1.0),
    ]


@pytest.mark.parametrize("case", [0, 1])
def test_condensed_mechanical_matches_monolithic(case, params, rng):
    mesh, boundaries, load = small_problems()[case]
    assert mesh.n_cells <= 16
    solver = StaggeredSolver(mesh, params, SolverConfig(), boundaries)
    phi = rng.uniform(0.0, 0.9, mesh.n_cells)
    u_cells, u_faces = solver.solve_mechanical(phi, load)
    expected_cells, expected_faces = monolithic_mechanical(solver, phi, load)
    scale = np.abs(expected_faces).max()
    assert u_faces == pytest.approx(expected_faces, abs=1e-10 * scale)
    assert u_cells == pytest.approx(expected_cells, abs=1e-10 * scale)


@pytest.mark.parametrize("viscosity", [0.0, 1e-3])
@pytest.mark.parametrize("case", [0, 1])
def test_condensed_phase_matches_monolithic(case, viscosity, rng):
    mesh, boundaries, _ = small_problems()[case]
    params = MaterialParams(viscosity=viscosity)
    solver = StaggeredSolver(mesh, params, SolverConfig(), boundaries)
    history = replace(HistoryState.zero(solver.layout, rng.uniform(0.0, 50.0, mesh.n_cells)),
                      node_energy=rng.uniform(0.0, 100.0, solver.layout.weights.shape[0]))
    phi_previous = rng.uniform(0.0, 0.5, mesh.n_cells)
    phi_cells, phi_faces = solver.solve_phase(history, phi_previous, 0.5)
    expected_cells, expected_faces = monolithic_phase(solver, history, phi_previous, 0.5)
    assert phi_cells == pytest.approx(expected_cells, rel=1e-10)
    assert phi_faces == pytest.approx(expected_faces, rel=1e-10)


def test_fully_degraded_body_keeps_displacement(tri_mesh, params):
    solver = StaggeredSolver(tri_mesh, params, SolverConfig(), tension_boundaries())
    intact_cells, intact_faces = solver.solve_mechanical(np.zeros(tri_mesh.n_cells), 1e-3)
    broken_cells, broken_faces = solver.solve_mechanical(np.ones(tri_mesh.n_cells), 1e-3)
    assert broken_faces == pytest.approx(intact_faces, rel=1e-8, abs=1e-14)
    assert broken_cells == pytest.approx(intact_cells, rel=1e-8, abs=1e-14)


def test_viscous_phase_approaches_rate_independent_limit(tri_mesh):
    params = MaterialParams(viscosity=1e-3)
    solver = StaggeredSolver(tri_mesh, params, SolverConfig(), tension_boundaries())
    ell, gc = params.length_scale, params.energy_release_rate
    h = gc / (2.0 * ell)
    history = HistoryState.zero(solver.layout, np.full(tri_mesh.n_cells, h))
    values = []
    for tau in (1e-3, 1e-2, 1e-1, 1.0, 10.0):
        phi_cells, phi_faces = solver.solve_phase(history, np.zeros(tri_mesh.n_cells), tau)
        driving = 2.0 * h / (ell * gc)
        expected = driving / (1.0 / ell ** 2 + driving + params.viscosity / (ell * gc * tau))
        assert phi_cells == pytest.approx(np.full(tri_mesh.n_cells, expected), rel=1e-9)
        assert phi_faces == pytest.approx(np.full(tri_mesh.n_faces, expected), rel=1e-9)
        values.append(expected)
    assert np.all(np.diff(values) > 0.0)
    assert values[-1] < 0.5
    assert 0.5 - values[-1] < 1e-2 * (0.5 - values[0])


def test_frozen_history_step_is_phase_fixed_point(tri_mesh, params):
    solver = StaggeredSolver(tri_mesh, params, SolverConfig(), tension_boundaries())
    h = params.energy_release_rate / (2.0 * params.length_scale)
    state = solver.initial_state(HistoryState.zero(solver.layout, np.linspace(0.0, h, tri_mesh.n_cells)))
    new, report = solver.staggered_step(state, 2e-3, update_history=False)
    assert report.converged
    assert new.history is state.history
    phi_cells, phi_faces = solver.solve_phase(state.history, state.phi_cells)
    assert new.phi_cells == pytest.approx(phi_cells, rel=1e-12, abs=1e-15)
    assert new.phi_faces == pytest.approx(phi_faces, rel=1e-12, abs=1e-15)
    u_cells, u_faces = solver.solve_mechanical(new.phi_cells, 2e-3)
    assert new.u_faces == pytest.approx(u_faces, rel=1e-10, abs=1e-15)
