"""
Run Configuration
TOML run files validated by pydantic models. A file may name a built-in
preset; its keys then override the preset section by section.
"""

import copy
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import toml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .energy import MaterialParams
from .errors import ConfigError
from .mesh import MARKER_LEFT, MARKER_RIGHT
from .presets import NOTCH_SEGMENT, MeshPreset, preset_config
from .solver import SolverConfig

logger = logging.getLogger(__name__)

_STRICT = ConfigDict(extra="forbid", frozen=True)


class NotchMode(str, Enum):
    """How the initial notch enters the model."""
    MESH_CUT = "mesh-cut"
    HISTORY_SEED = "history-seed"
    NONE = "none"


class RunSection(BaseModel):
    model_config = _STRICT

    name: str = "run"
    preset: Optional[str] = None


class MeshSection(BaseModel):
    """Mesh file or built-in mesh."""
    model_config = _STRICT

    path: Optional[str] = None
    preset: Optional[MeshPreset] = None
    cells_per_side: int = Field(50, ge=1)
    h_min: float = Field(0.008, gt=0.0)
    h_max: float = Field(0.05, gt=0.0)
    growth: float = Field(1.2, ge=1.0)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.path is None) == (self.preset is None):
            raise ValueError("exactly one of mesh.path and mesh.preset must be given")
        return self


class LoadingSection(BaseModel):
    """Loaded and clamped boundary markers with the load direction."""
    model_config = _STRICT

    loaded_markers: List[int] = [MARKER_LEFT]
    fixed_markers: List[int] = [MARKER_RIGHT]
    direction: Tuple[float, float] = (-1.0, 0.0)

    @field_validator("direction")
    @classmethod
    def _unit(cls, value):
        if abs(np.hypot(*value) - 1.0) > 1e-12:
            raise ValueError(f"loading.direction must be a unit vector, got {value}")
        return value

    @model_validator(mode="after")
    def _disjoint(self):
        if not self.loaded_markers or not self.fixed_markers:
            raise ValueError("loaded_markers and fixed_markers must not be empty")
        if set(self.loaded_markers) & set(self.fixed_markers):
            raise ValueError("loaded_markers and fixed_markers overlap")
        return self


class NotchSection(BaseModel):
    model_config = _STRICT

    mode: NotchMode = NotchMode.MESH_CUT
    segment: Tuple[float, float, float, float] = tuple(NOTCH_SEGMENT)
    amplitude: float = Field(1000.0, gt=0.0)
    width: Optional[float] = Field(None, gt=0.0)

    @property
    def endpoints(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        x0, y0, x1, y1 = self.segment
        return (x0, y0), (x1, y1)


class InitialSection(BaseModel):
    """Initial phase and history bands along the notch segment, of width `width` (default l)."""
    model_config = _STRICT

    phase: float = Field(0.0, ge=0.0, le=1.0)
    history: float = Field(0.0, ge=0.0)
    width: Optional[float] = Field(None, gt=0.0)


class OutputSection(BaseModel):
    model_config = _STRICT

    directory: str = "results"
    csv_name: str = "load_displacement.csv"
    snapshot_every: int = Field(0, ge=0)
    checkpoint_every: int = Field(0, ge=0)
    deterministic: bool = False


class RunConfig(BaseModel):
    """Complete description of one benchmark run."""
    model_config = _STRICT

    run: RunSection = RunSection()
    mesh: MeshSection
    material: MaterialParams = MaterialParams()
    solver: SolverConfig = SolverConfig()
    loading: LoadingSection = LoadingSection()
    notch: NotchSection = NotchSection()
    initial: InitialSection = InitialSection()
    output: OutputSection = OutputSection()


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge override into a copy of base."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _format_errors(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        where = ".".join(str(p) for p in error["loc"]) or "<root>"
        parts.append(f"{where}: {error['msg']}")
    return "; ".join(parts)


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    """Validate a configuration dictionary, starting from its preset if it names one."""
    preset = data.get("run", {}).get("preset") if isinstance(data.get("run"), dict) else None
    merged = deep_merge(preset_config(preset), data) if preset else data
    # a file mesh replaces the preset mesh entirely
    if preset and "path" in data.get("mesh", {}):
        merged["mesh"] = copy.deepcopy(data["mesh"])
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as exc:
        raise ConfigError(f"Invalid configuration: {_format_errors(exc)}") from exc


def parse_config(text: str) -> RunConfig:
    try:
        data = toml.loads(text)
    except toml.TomlDecodeError as exc:
        raise ConfigError(f"Malformed TOML: {exc}") from exc
    return config_from_dict(data)


def load_config(path, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Load a TOML run file and apply command-line overrides."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Configuration file not found: {path}")
    try:
        data = toml.load(path)
    except toml.TomlDecodeError as exc:
        raise ConfigError(f"Malformed TOML in {path}: {exc}") from exc
    mesh_path = data.get("mesh", {}).get("path")
    if mesh_path and not Path(mesh_path).is_absolute():
        data["mesh"]["path"] = str((path.parent / mesh_path).resolve())
    if overrides:
        data = deep_merge(data, overrides)
    config = config_from_dict(data)
    logger.info(f"Loaded configuration {config.run.name!r} from {path}")
    return config


def with_overrides(config: RunConfig, overrides: Dict[str, Any]) -> RunConfig:
    return config_from_dict(deep_merge(config_to_dict(config), overrides))


def config_to_dict(config: RunConfig) -> Dict[str, Any]:
    data = config.model_dump(mode="json", exclude_none=True)
    data["run"].pop("preset", None)
    return data


def config_to_toml(config: RunConfig) -> str:
    """Fully resolved configuration as TOML text."""
    return toml.dumps(config_to_dict(config))
