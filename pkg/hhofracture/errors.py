"""
Exception hierarchy for the phase-field fracture solver.
Every error raised on purpose by the package derives from HHOFractureError.
"""

from typing import Optional


class HHOFractureError(Exception):
    """Base class for all solver errors."""

    exit_code = 2


class MeshError(HHOFractureError):
    """Malformed mesh file, invalid topology or unresolvable notch."""

    exit_code = 2


class GeometryError(HHOFractureError):
    """Degenerate cell or face geometry detected by a local computation."""

    exit_code = 2


class ConfigError(HHOFractureError):
    """Invalid run configuration."""

    exit_code = 2


class SolverError(HHOFractureError):
    """Linear solver breakdown or corrupted solver input."""

    exit_code = 3


class ConvergenceError(HHOFractureError):
    """Staggered iterations did not reach the tolerance."""

    exit_code = 3

    def __init__(self, message: str, step: Optional[int] = None,
                 increments: Optional[tuple] = None):
        super().__init__(message)
        self.step = step
        self.increments = increments


IO_EXIT_CODE = 4
