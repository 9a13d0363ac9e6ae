"""
Elastic Energy Densities and Tension-Compression Splits
Plane-strain strains are stored as (..., 3) arrays [exx, eyy, exy]; the
out-of-plane strain is zero, so traces and deviators use the 3D definitions.
"""

import logging
from enum import Enum
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

# Plane-strain benchmark material (kN, mm)
DEFAULT_MATERIAL = {
    "lame_lambda": 121.15,
    "lame_mu": 80.77,
    "energy_release_rate": 2.7e-3,
    "length_scale": 0.0075,
    "viscosity": 0.0,
    "degradation_floor": 1e-7,
}


class Formulation(str, Enum):
    """Energy driving the phase field."""
    ISOTROPIC = "isotropic"
    HYBRID_SP = "hybrid-sp"
    HYBRID_VD = "hybrid-vd"


class MaterialParams(BaseModel):
    """Lamé coefficients, fracture toughness, regularisation length and viscosity."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    lame_lambda: float = DEFAULT_MATERIAL["lame_lambda"]
    lame_mu: float = Field(DEFAULT_MATERIAL["lame_mu"], gt=0.0)
    energy_release_rate: float = Field(DEFAULT_MATERIAL["energy_release_rate"], gt=0.0)
    length_scale: float = Field(DEFAULT_MATERIAL["length_scale"], gt=0.0)
    viscosity: float = Field(DEFAULT_MATERIAL["viscosity"], ge=0.0)
    degradation_floor: float = Field(DEFAULT_MATERIAL["degradation_floor"], gt=0.0, lt=1e-2)
    formulation: Formulation = Formulation.HYBRID_VD

    @model_validator(mode="after")
    def _check_bulk_modulus(self):
        if self.lame_lambda <= -2.0 * self.lame_mu / 3.0:
            raise ValueError(
                f"lame_lambda={self.lame_lambda} gives a non-positive bulk modulus "
                f"(must exceed -2*mu/3 = {-2.0 * self.lame_mu / 3.0:.6g})")
        return self

    @property
    def bulk_modulus(self) -> float:
        return self.lame_lambda + 2.0 * self.lame_mu / 3.0


def _components(strain: np.ndarray):
    strain = np.asarray(strain, dtype=float)
    return strain[..., 0], strain[..., 1], strain[..., 2]


def strain_matrix(strain: np.ndarray) -> np.ndarray:
    exx, eyy, exy = _components(strain)
    return np.stack([np.stack([exx, exy], -1), np.stack([exy, eyy], -1)], -2)


def strain_vector(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    return np.stack([matrix[..., 0, 0], matrix[..., 1, 1],
                     0.5 * (matrix[..., 0, 1] + matrix[..., 1, 0])], -1)


def psi0(strain: np.ndarray, params: MaterialParams) -> np.ndarray:
    """Undecomposed energy density lambda/2 tr^2 + mu eps:eps."""
    exx, eyy, exy = _components(strain)
    tr = exx + eyy
    return 0.5 * params.lame_lambda * tr ** 2 + params.lame_mu * (exx ** 2 + eyy ** 2 + 2.0 * exy ** 2)


def stress(strain: np.ndarray, params: MaterialParams) -> np.ndarray:
    """In-plane components of 2 mu eps + lambda tr(eps) I."""
    exx, eyy, exy = _components(strain)
    tr = exx + eyy
    mu2 = 2.0 * params.lame_mu
    return np.stack([mu2 * exx + params.lame_lambda * tr,
                     mu2 * eyy + params.lame_lambda * tr,
                     mu2 * exy], -1)


def eig2_sym(strain: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Principal strains e1 >= e2 with orthonormal directions n1, n2.

    The direction of e1 is taken from the larger column of (eps - e2 I); the
    isotropic case returns the coordinate axes.
    """
    exx, eyy, exy = _components(strain)
    mean = 0.5 * (exx + eyy)
    half = 0.5 * (exx - eyy)
    radius = np.hypot(half, exy)
    e1 = mean + radius
    e2 = mean - radius

    col_a = np.stack([half + radius, exy], -1)
    col_b = np.stack([exy, radius - half], -1)
    norm_a = np.hypot(col_a[..., 0], col_a[..., 1])
    norm_b = np.hypot(col_b[..., 0], col_b[..., 1])
    use_a = (norm_a >= norm_b)[..., None]
    vec = np.where(use_a, col_a, col_b)
    norm = np.maximum(norm_a, norm_b)[..., None]
    isotropic = norm <= 0.0
    n1 = np.where(isotropic, np.array([1.0, 0.0]), vec / np.where(isotropic, 1.0, norm))
    n2 = np.stack([-n1[..., 1], n1[..., 0]], -1)
    return e1, e2, n1, n2


def split_spectral(strain: np.ndarray, params: MaterialParams) -> Tuple[np.ndarray, np.ndarray]:
    """Tensile and compressive energies from principal strains."""
    exx, eyy, _ = _components(strain)
    e1, e2, _, _ = eig2_sym(strain)
    tr = exx + eyy
    tr_pos, tr_neg = np.maximum(tr, 0.0), np.minimum(tr, 0.0)
    lam, mu = params.lame_lambda, params.lame_mu
    plus = 0.5 * lam * tr_pos ** 2 + mu * (np.maximum(e1, 0.0) ** 2 + np.maximum(e2, 0.0) ** 2)
    minus = 0.5 * lam * tr_neg ** 2 + mu * (np.minimum(e1, 0.0) ** 2 + np.minimum(e2, 0.0) ** 2)
    return plus, minus


def split_voldev(strain: np.ndarray, params: MaterialParams) -> Tuple[np.ndarray, np.ndarray]:
    """Positive volumetric plus deviatoric energy against negative volumetric energy."""
    exx, eyy, exy = _components(strain)
    tr = exx + eyy
    third = tr / 3.0
    deviatoric = (exx - third) ** 2 + (eyy - third) ** 2 + third ** 2 + 2.0 * exy ** 2
    half_k = 0.5 * params.bulk_modulus
    plus = half_k * np.maximum(tr, 0.0) ** 2 + params.lame_mu * deviatoric
    minus = half_k * np.minimum(tr, 0.0) ** 2
    return plus, minus


def driving_energy(strain: np.ndarray, params: MaterialParams) -> np.ndarray:
    """Energy stored in the history field for the selected formulation."""
    if params.formulation is Formulation.HYBRID_SP:
        return split_spectral(strain, params)[0]
    if params.formulation is Formulation.HYBRID_VD:
        return split_voldev(strain, params)[0]
    return psi0(strain, params)


def degradation(phi, params: MaterialParams):
    """(1 - phi)^2 with phi clipped to [0, 1] and a floor at degradation_floor."""
    phi = np.clip(np.asarray(phi, dtype=float), 0.0, 1.0)
    return np.maximum((1.0 - phi) ** 2, params.degradation_floor)
