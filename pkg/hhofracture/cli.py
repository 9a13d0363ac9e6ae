"""
Command Line Interface
solve, resume, mesh-info and cut-notch commands with rich logging and
exit codes per error family.
"""

import logging
import sys
from functools import wraps
from pathlib import Path
from typing import Any, Dict, Optional

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .benchmark import resume_benchmark, run_benchmark
from .config import load_config
from .errors import IO_EXIT_CODE, HHOFractureError
from .mesh import MARKER_NAMES, cut_notch, read_mesh, write_mesh

logger = logging.getLogger(__name__)
console = Console()


def setup_logging(verbose: bool = False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), rich_tracebacks=verbose, show_path=False)],
        force=True,
    )


def handle_errors(func):
    """Map package and I/O errors to exit codes."""
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except HHOFractureError as exc:
            logger.error(f"{type(exc).__name__}: {exc}")
            sys.exit(exc.exit_code)
        except OSError as exc:
            logger.error(f"I/O error: {exc}")
            sys.exit(IO_EXIT_CODE)
    return wrapper


def _overrides(output_dir: Optional[str], snapshot_every: Optional[int]) -> Dict[str, Any]:
    output: Dict[str, Any] = {}
    if output_dir is not None:
        output["directory"] = str(Path(output_dir).resolve())
    if snapshot_every is not None:
        output["snapshot_every"] = snapshot_every
    return {"output": output} if output else {}


run_options = [
    click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True,
                 help="Worker threads for building local operators."),
    click.option("--output-dir", type=click.Path(file_okay=False), default=None,
                 help="Override output.directory."),
    click.option("--snapshot-every", type=click.IntRange(min=0), default=None,
                 help="Override output.snapshot_every (0 disables snapshots)."),
]


def with_run_options(func):
    for option in reversed(run_options):
        func = option(func)
    return func


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging.")
def main(verbose: bool):
    """Phase-field brittle fracture with hybrid high-order discretizations.

    \b
    Exit codes:
      0  success
      2  invalid configuration or mesh
      3  non-convergence or linear solver breakdown
      4  I/O error
    """
    setup_logging(verbose)


@main.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@with_run_options
@handle_errors
def solve(config_path: str, threads: int, output_dir: Optional[str], snapshot_every: Optional[int]):
    """Run the benchmark described by CONFIG_PATH."""
    config = load_config(config_path, _overrides(output_dir, snapshot_every))
    result = run_benchmark(config, threads=threads)
    console.print(f"[green]Completed[/green] {len(result.reports)} steps; "
                  f"load-displacement log at {result.csv_path}")


@main.command()
@click.argument("checkpoint", type=click.Path(dir_okay=False))
@with_run_options
@handle_errors
def resume(checkpoint: str, threads: int, output_dir: Optional[str], snapshot_every: Optional[int]):
    """Continue a run from CHECKPOINT."""
    result = resume_benchmark(checkpoint, _overrides(output_dir, snapshot_every), threads=threads)
    console.print(f"[green]Resumed[/green] and completed {len(result.reports)} steps; "
                  f"load-displacement log at {result.csv_path}")


@main.command("mesh-info")
@click.argument("mesh_path", type=click.Path(dir_okay=False))
@handle_errors
def mesh_info(mesh_path: str):
    """Print counts, markers and sizes of MESH_PATH."""
    summary = read_mesh(mesh_path).summary()
    table = Table(title=f"Mesh {mesh_path}")
    table.add_column("Quantity")
    table.add_column("Value", justify="right")
    for key in ("vertices", "cells", "faces", "internal_faces", "boundary_faces"):
        table.add_row(key.replace("_", " "), str(summary[key]))
    for sides, count in summary["cell_sides"].items():
        table.add_row(f"cells with {sides} faces", str(count))
    for marker, count in summary["markers"].items():
        table.add_row(f"marker {marker} ({MARKER_NAMES.get(marker, 'user')})", str(count))
    table.add_row("h min", f"{summary['h_min']:.6g}")
    table.add_row("h max", f"{summary['h_max']:.6g}")
    table.add_row("area", f"{summary['area']:.12g}")
    table.add_row("closure defect", f"{summary['closure_defect']:.3e}")
    console.print(table)


@main.command("cut-notch")
@click.argument("mesh_path", type=click.Path(dir_okay=False))
@click.argument("x0", type=float)
@click.argument("y0", type=float)
@click.argument("x1", type=float)
@click.argument("y1", type=float)
@click.argument("out_path", type=click.Path(dir_okay=False))
@handle_errors
def cut_notch_command(mesh_path: str, x0: float, y0: float, x1: float, y1: float, out_path: str):
    """Cut a notch from (X0, Y0) to (X1, Y1) and write the mesh to OUT_PATH."""
    mesh = read_mesh(mesh_path)
    cut = cut_notch(mesh, ((x0, y0), (x1, y1)))
    write_mesh(cut, out_path)
    console.print(f"Wrote {out_path}: {cut.n_vertices} vertices (+{cut.n_vertices - mesh.n_vertices}), "
                  f"{cut.n_cells} cells")
