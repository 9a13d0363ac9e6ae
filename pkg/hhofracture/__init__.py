"""
HHO Fracture - phase-field brittle fracture on polygonal meshes with hybrid
high-order discretizations and a staggered solver.
"""

from .energy import Formulation, MaterialParams
from .errors import (ConfigError, ConvergenceError, GeometryError, HHOFractureError, MeshError,
                     SolverError)
from .mesh import Mesh, cut_notch, parse_mesh, read_mesh, write_mesh
from .solver import SolverConfig, StaggeredSolver

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "Formulation",
    "GeometryError",
    "HHOFractureError",
    "MaterialParams",
    "Mesh",
    "MeshError",
    "SolverConfig",
    "SolverError",
    "StaggeredSolver",
    "cut_notch",
    "parse_mesh",
    "read_mesh",
    "write_mesh",
]
