#!/usr/bin/env python3
"""
Write the built-in benchmark meshes to .mesh files, with the notch cut where
the benchmark uses one, so they can be inspected or edited and fed back
through [mesh] path.

Run from the repository root: python -m scripts.generate_benchmark_meshes
"""

import logging
from pathlib import Path

import click
from rich.logging import RichHandler

from hhofracture.mesh import cut_notch, write_mesh
from hhofracture.presets import NOTCH_SEGMENT, build_preset_mesh

logger = logging.getLogger(__name__)

# file stem -> (mesh preset, keyword arguments, cut the notch)
MESHES = {
    "square_triangles_50": ("square-triangles", {"cells_per_side": 50}, True),
    "square_graded": ("square-graded", {"h_min": 0.008, "h_max": 0.05, "growth": 1.2}, True),
    "square_hexagons_40": ("square-hexagons", {"cells_per_side": 40}, False),
}


@click.command()
@click.option("--output-dir", type=click.Path(file_okay=False), default="meshes", show_default=True)
@click.option("--only", multiple=True, type=click.Choice(sorted(MESHES)), help="Generate only these meshes.")
def main(output_dir: str, only):
    """Generate the benchmark meshes"""
    logging.basicConfig(level=logging.INFO, format="%(message)s", handlers=[RichHandler(show_path=False)])
    directory = Path(output_dir)
    directory.mkdir(parents=True, exist_ok=True)

    for stem, (preset, options, notched) in MESHES.items():
        if only and stem not in only:
            continue
        mesh = build_preset_mesh(preset, **options)
        if notched:
            x0, y0, x1, y1 = NOTCH_SEGMENT
            mesh = cut_notch(mesh, ((x0, y0), (x1, y1)))
        path = write_mesh(mesh, directory / f"{stem}.mesh")
        logger.info(f"Generated: {path} ({mesh.n_cells} cells, {mesh.n_vertices} vertices)")


if __name__ == "__main__":
    main()
