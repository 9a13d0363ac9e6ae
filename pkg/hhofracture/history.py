"""
History Field
Per-cell storage of the strain with the largest tensile energy, the update
rules used inside the staggered iterations, and the initial history used to
seed a notch.

Quadrature-node data is kept in flat arrays sorted by cell; `offsets`
delimits the nodes of each cell so per-cell reductions use `reduceat`.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .energy import MaterialParams, driving_energy
from .errors import SolverError
from .mesh import Mesh

logger = logging.getLogger(__name__)

STRAIN_COEFFICIENTS = 9


class HistoryComparison(str, Enum):
    """Reference maximum a candidate strain must exceed."""
    ITERATE = "iterate"
    STEP = "step"


class HistoryStorage(str, Enum):
    """Whether the history keeps a strain polynomial or nodal maxima."""
    POLYNOMIAL = "polynomial"
    NODES = "nodes"


@dataclass(frozen=True)
class HistoryLayout:
    """Quadrature nodes of all cells, flattened."""
    offsets: np.ndarray   # (nc + 1,)
    node_cell: np.ndarray
    weights: np.ndarray
    points: np.ndarray    # (n_nodes, 2)
    basis: np.ndarray     # (n_nodes, 3) P1 cell basis at the nodes

    @classmethod
    def from_operators(cls, operators: Sequence) -> "HistoryLayout":
        counts = np.array([len(op.quad) for op in operators], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return cls(
            offsets=offsets,
            node_cell=np.repeat(np.arange(len(operators)), counts),
            weights=np.concatenate([op.quad.weights for op in operators]),
            points=np.vstack([op.quad.points for op in operators]),
            basis=np.vstack([op.strain_nodes for op in operators]),
        )

    @property
    def n_cells(self) -> int:
        return self.offsets.shape[0] - 1

    def cell_max(self, node_values: np.ndarray) -> np.ndarray:
        return np.maximum.reduceat(node_values, self.offsets[:-1])

    def cell_integral(self, node_values: np.ndarray) -> np.ndarray:
        return np.add.reduceat(self.weights * node_values, self.offsets[:-1])

    def strain_at_nodes(self, strain: np.ndarray) -> np.ndarray:
        """[exx, eyy, exy] at every node from (nc, 9) Sym-P1 coefficients."""
        coeff = strain[self.node_cell].reshape(-1, 3, 3)
        return np.einsum("ni,nki->nk", self.basis, coeff)


@dataclass(frozen=True)
class HistoryState:
    """Stored strain, its nodal energy and the initial history of every cell."""
    strain: np.ndarray       # (nc, 9)
    node_energy: np.ndarray  # (n_nodes,)
    energy_max: np.ndarray   # (nc,)
    initial: np.ndarray      # (nc,) constant seed H0

    @classmethod
    def zero(cls, layout: HistoryLayout, initial: Optional[np.ndarray] = None) -> "HistoryState":
        nc = layout.n_cells
        seed = np.zeros(nc) if initial is None else np.asarray(initial, dtype=float)
        if seed.shape != (nc,) or np.any(seed < 0.0):
            raise SolverError("Initial history must be a non-negative value per cell")
        return cls(np.zeros((nc, STRAIN_COEFFICIENTS)), np.zeros(layout.weights.shape[0]),
                   np.zeros(nc), seed)

    def driving_nodes(self, layout: HistoryLayout) -> np.ndarray:
        """H + H0 at every node."""
        return self.node_energy + self.initial[layout.node_cell]

    def driving_integral(self, layout: HistoryLayout) -> np.ndarray:
        """Per-cell integral of H + H0."""
        return layout.cell_integral(self.driving_nodes(layout))

    def driving_average(self, layout: HistoryLayout, areas: np.ndarray) -> np.ndarray:
        return self.driving_integral(layout) / areas


def update_history(state: HistoryState, layout: HistoryLayout, strain: np.ndarray,
                   params: MaterialParams,
                   comparison: HistoryComparison = HistoryComparison.ITERATE,
                   committed: Optional[HistoryState] = None,
                   storage: HistoryStorage = HistoryStorage.POLYNOMIAL) -> HistoryState:
    """Keep, per cell, the strain whose largest nodal energy is the largest so far.

    With comparison=iterate the candidate competes with the current iterate;
    with comparison=step it competes with the last accepted step.
    """
    base = state
    if HistoryComparison(comparison) is HistoryComparison.STEP:
        if committed is None:
            raise SolverError("Step comparison needs the committed history")
        base = committed

    strain = np.asarray(strain, dtype=float)
    energy = driving_energy(layout.strain_at_nodes(strain), params)
    new_max = layout.cell_max(energy)
    replace_cell = new_max > base.energy_max
    on_nodes = replace_cell[layout.node_cell]

    if HistoryStorage(storage) is HistoryStorage.NODES:
        node_energy = np.maximum(base.node_energy, energy)
        energy_max = layout.cell_max(node_energy)
    else:
        node_energy = np.where(on_nodes, energy, base.node_energy)
        energy_max = np.where(replace_cell, new_max, base.energy_max)

    logger.debug(f"History update replaced {int(replace_cell.sum())} of {replace_cell.size} cells")
    return replace(
        base,
        strain=np.where(replace_cell[:, None], strain, base.strain),
        node_energy=node_energy,
        energy_max=energy_max,
    )


def segment_distance(points: np.ndarray, segment) -> np.ndarray:
    p0, p1 = (np.asarray(p, dtype=float) for p in segment)
    d = p1 - p0
    length2 = float(d @ d)
    rel = np.atleast_2d(points) - p0
    t = np.zeros(rel.shape[0]) if length2 == 0.0 else np.clip(rel @ d / length2, 0.0, 1.0)
    return np.hypot(*(rel - t[:, None] * d).T)


def notch_band(points: np.ndarray, segment, width: float) -> np.ndarray:
    """max(0, 1 - 2 dist/width): one on the segment, zero at half a width from it."""
    return np.maximum(0.0, 1.0 - 2.0 * segment_distance(points, segment) / width)


def notch_history_seed(mesh: Mesh, segment, amplitude: float, params: MaterialParams,
                       width: Optional[float] = None) -> np.ndarray:
    """B Gc/(2 l) max(0, 1 - 2 dist/width) at every cell centroid."""
    if amplitude <= 0.0:
        raise SolverError(f"Notch amplitude must be positive, got {amplitude}")
    width = params.length_scale if width is None else width
    peak = amplitude * params.energy_release_rate / (2.0 * params.length_scale)
    return peak * notch_band(mesh.cell_centroids, segment, width)


def init_history_notch(mesh: Mesh, layout: HistoryLayout, segment, amplitude: float,
                       params: MaterialParams, width: Optional[float] = None) -> HistoryState:
    """Zero stored strain with a seeded initial history along the notch line."""
    seed = notch_history_seed(mesh, segment, amplitude, params, width)
    logger.info(f"Seeded notch history in {int((seed > 0).sum())} cells, peak {seed.max():.6g}")
    return HistoryState.zero(layout, seed)


def initial_history_from_field(layout: HistoryLayout, areas: np.ndarray,
                               field: Callable[[np.ndarray], np.ndarray]) -> HistoryState:
    """Initial history given by the cell averages of a field."""
    values = np.asarray(field(layout.points), dtype=float)
    return HistoryState.zero(layout, layout.cell_integral(values) / areas)
