"""
Run Output
Load-displacement CSV log, legacy ASCII VTK snapshots and versioned
checkpoints that embed the resolved configuration and the mesh.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .errors import ConfigError, MeshError
from .history import HistoryState
from .mesh import Mesh
from .solver import StateFields

logger = logging.getLogger(__name__)

CSV_HEADER = ("step", "time", "displacement", "force_x", "force_y", "force_magnitude",
              "force_average", "iterations", "wall_time")

VTK_POLYGON = 7
VTK_TITLE = "hhofracture snapshot"
CHECKPOINT_VERSION = 1


def _number(value: float) -> str:
    return format(float(value), ".17g")


class LoadDisplacementLog:
    """Appends one row per accepted step and flushes it immediately.

    When appending with `keep_through`, rows of later steps left by an earlier
    run are dropped first so a resumed run continues the curve without repeats.
    """

    def __init__(self, path, deterministic: bool = False, append: bool = False,
                 keep_through: Optional[int] = None):
        self.path = Path(path)
        self.deterministic = deterministic
        self.path.parent.mkdir(parents=True, exist_ok=True)
        existing = append and self.path.exists() and self.path.stat().st_size > 0
        if existing and keep_through is not None:
            self._truncate(keep_through)
        self._handle = open(self.path, "a" if existing else "w", newline="")
        self._writer = csv.writer(self._handle, lineterminator="\n")
        if not existing:
            self._writer.writerow(CSV_HEADER)
            self._handle.flush()

    def _truncate(self, keep_through: int):
        with open(self.path, newline="") as f:
            rows = list(csv.reader(f))
        header, body = rows[0], rows[1:]
        kept = [row for row in body if row and int(row[0]) <= keep_through]
        if len(kept) == len(body):
            return
        logger.warning(f"Dropping {len(body) - len(kept)} rows after step {keep_through} from {self.path}")
        with open(self.path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(kept)

    def append(self, step: int, time: float, load: float, force: np.ndarray,
               boundary_length: float, iterations: int, wall_time: float):
        fx, fy = float(force[0]), float(force[1])
        magnitude = float(np.hypot(fx, fy))
        self._writer.writerow([
            step, _number(time), _number(load), _number(fx), _number(fy), _number(magnitude),
            _number(magnitude / boundary_length), iterations,
            _number(0.0 if self.deterministic else wall_time),
        ])
        self._handle.flush()

    def close(self):
        if not self._handle.closed:
            self._handle.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_load_displacement(path) -> List[Dict[str, float]]:
    with open(path, newline="") as f:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(f)]


@dataclass
class VtkSnapshot:
    """Polygon mesh with cell data as stored in a legacy VTK file."""
    points: np.ndarray
    cells: List[np.ndarray]
    cell_data: Dict[str, np.ndarray]
    title: str = VTK_TITLE


def format_vtk(snapshot: VtkSnapshot) -> str:
    """Legacy ASCII unstructured grid with polygon cells and scalar cell data."""
    n = len(snapshot.cells)
    lines = ["# vtk DataFile Version 3.0", snapshot.title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {snapshot.points.shape[0]} double"]
    lines += [f"{_number(x)} {_number(y)} 0" for x, y in snapshot.points]
    size = sum(c.shape[0] + 1 for c in snapshot.cells)
    lines.append(f"CELLS {n} {size}")
    lines += [" ".join([str(c.shape[0])] + [str(int(v)) for v in c]) for c in snapshot.cells]
    lines.append(f"CELL_TYPES {n}")
    lines += [str(VTK_POLYGON)] * n
    lines.append(f"CELL_DATA {n}")
    for name, values in snapshot.cell_data.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [_number(v) for v in values]
    return "\n".join(lines) + "\n"


def write_vtk(snapshot: VtkSnapshot, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_vtk(snapshot))
    return path


def read_vtk(path) -> VtkSnapshot:
    """Reload a snapshot written by write_vtk."""
    lines = Path(path).read_text().splitlines()
    try:
        title = lines[1]
        i = 4
        npoints = int(lines[i].split()[1])
        points = np.array([[float(t) for t in lines[i + 1 + k].split()[:2]] for k in range(npoints)])
        i += 1 + npoints
        ncells = int(lines[i].split()[1])
        cells = [np.array([int(t) for t in lines[i + 1 + k].split()[1:]], dtype=np.int64)
                 for k in range(ncells)]
        i += 1 + ncells
        i += 1 + ncells  # CELL_TYPES block
        i += 1           # CELL_DATA header
        cell_data: Dict[str, np.ndarray] = {}
        while i < len(lines) and lines[i].startswith("SCALARS"):
            name = lines[i].split()[1]
            cell_data[name] = np.array([float(lines[i + 2 + k]) for k in range(ncells)])
            i += 2 + ncells
    except (IndexError, ValueError) as exc:
        raise MeshError(f"Malformed VTK snapshot {path}: {exc}") from exc
    return VtkSnapshot(points, cells, cell_data, title)


def state_snapshot(mesh: Mesh, state: StateFields, history_average: np.ndarray) -> VtkSnapshot:
    """Cell fields phi, H and |u| (norm of the cell mean displacement)."""
    mean_u = state.u_cells[:, [0, 3]]
    return VtkSnapshot(
        points=mesh.vertices,
        cells=mesh.cells,
        cell_data={
            "phi": state.phi_cells,
            "H": history_average,
            "umag": np.hypot(mean_u[:, 0], mean_u[:, 1]),
        },
        title=f"{VTK_TITLE} step {state.step} load {_number(state.load)}",
    )


def export_vtk(state: StateFields, mesh: Mesh, path, history_average: np.ndarray) -> Path:
    return write_vtk(state_snapshot(mesh, state, history_average), path)


@dataclass
class Checkpoint:
    """Everything needed to resume a run."""
    state: StateFields
    config_text: str
    mesh_text: str
    version: int = CHECKPOINT_VERSION


def save_checkpoint(path, state: StateFields, config_text: str, mesh_text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h = state.history
    with open(path, "wb") as f:
        np.savez_compressed(
            f,
            version=np.array(CHECKPOINT_VERSION),
            step=np.array(state.step),
            time=np.array(state.time),
            load=np.array(state.load),
            u_cells=state.u_cells,
            u_faces=state.u_faces,
            phi_cells=state.phi_cells,
            phi_faces=state.phi_faces,
            history_strain=h.strain,
            history_node_energy=h.node_energy,
            history_energy_max=h.energy_max,
            history_initial=h.initial,
            config=np.array(config_text),
            mesh=np.array(mesh_text),
        )
    logger.info(f"Checkpoint written at step {state.step}: {path}")
    return path


def load_checkpoint(path) -> Checkpoint:
    with np.load(Path(path), allow_pickle=False) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ConfigError(f"Unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})")
        history = HistoryState(
            strain=data["history_strain"],
            node_energy=data["history_node_energy"],
            energy_max=data["history_energy_max"],
            initial=data["history_initial"],
        )
        state = StateFields(
            u_cells=data["u_cells"],
            u_faces=data["u_faces"],
            phi_cells=data["phi_cells"],
            phi_faces=data["phi_faces"],
            history=history,
            step=int(data["step"]),
            time=float(data["time"]),
            load=float(data["load"]),
        )
        return Checkpoint(state, str(data["config"]), str(data["mesh"]), version)


def snapshot_name(run_name: str, step: int) -> str:
    return f"{run_name}_{step:06d}.vtk"


def checkpoint_name(run_name: str, step: Optional[int] = None) -> str:
    return f"{run_name}_checkpoint.npz" if step is None else f"{run_name}_{step:06d}.npz"
