"""
Run configuration: YAML documents with Hz/W-suffixed keys, validated with pydantic.

Frequencies are converted to rad/s exactly once, when RunConfig.to_params()
and RunConfig.to_drive() build the domain objects.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError

from ..experiments import GridOptions, log_power_grid
from ..model import (
    ConfigError,
    DriveConfig,
    InvalidParameterError,
    SystemParams,
    describe_validation_error,
    hz_to_rad,
    load_default_profile,
    system_params_from_hz,
)
from ..steady_state import SolverOptions

logger = logging.getLogger(__name__)

RATE_KEYS = ("omega_1_hz", "omega_2_hz", "kappa_1_hz", "kappa_2_hz", "omega_m_hz", "q_m")


class SystemSection(BaseModel):
    """Device constants, Hz-denominated"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    omega_1_hz: Optional[float] = None
    omega_2_hz: Optional[float] = None
    kappa_1_hz: Optional[float] = None
    kappa_2_hz: Optional[float] = None
    kappa_e1_hz: Optional[float] = None
    kappa_e2_hz: Optional[float] = None
    kappa_e1_ratio: Optional[float] = None
    kappa_e2_ratio: Optional[float] = None
    omega_m_hz: Optional[float] = None
    q_m: Optional[float] = None
    g_1_hz: Optional[float] = None
    g_2_hz: Optional[float] = None


class DriveSection(BaseModel):
    """Pump and probe settings; detunings default to the red sideband +omega_m"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    p_left_w: float = Field(0.0, ge=0.0)
    p_right_w: float = Field(0.0, ge=0.0)
    p_probe_w: float = Field(1e-9, ge=0.0)
    delta_1_hz: Optional[float] = None
    delta_2_hz: Optional[float] = None


class GridSection(GridOptions):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SweepSection(BaseModel):
    """Left pump power axis of delay sweeps"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    p_min_w: float = Field(1e-9, gt=0.0)
    p_max_w: float = Field(2e-5, gt=0.0)
    points_per_decade: int = Field(200, ge=1)
    which: Literal["transmission", "reflection"] = "transmission"
    probe_detuning_hz: float = 0.0


class SolverSection(SolverOptions):
    model_config = ConfigDict(extra="forbid", frozen=True)


class OutputSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    format: Literal["csv", "json"] = "csv"
    directory: Optional[str] = None


class RunConfig(BaseModel):
    """Validated run configuration"""

    model_config = ConfigDict(extra="forbid")

    system: SystemSection = Field(default_factory=SystemSection)
    drive: DriveSection = Field(default_factory=DriveSection)
    grid: GridSection = Field(default_factory=GridSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    output: OutputSection = Field(default_factory=OutputSection)

    _defaulted: Tuple[str, ...] = PrivateAttr(default=())
    _calibrated: Tuple[str, ...] = PrivateAttr(default=())

    def to_params(self) -> SystemParams:
        return system_params_from_hz(self.system.model_dump())

    def to_drive(self, params: Optional[SystemParams] = None) -> DriveConfig:
        params = params or self.to_params()
        return DriveConfig(
            p_left=self.drive.p_left_w,
            p_right=self.drive.p_right_w,
            p_probe=self.drive.p_probe_w,
            delta_1=params.omega_m if self.drive.delta_1_hz is None else hz_to_rad(self.drive.delta_1_hz),
            delta_2=params.omega_m if self.drive.delta_2_hz is None else hz_to_rad(self.drive.delta_2_hz),
        )

    def power_axis(self) -> np.ndarray:
        return log_power_grid(self.sweep.p_min_w, self.sweep.p_max_w, self.sweep.points_per_decade)

    @property
    def defaulted_keys(self) -> Tuple[str, ...]:
        """System keys filled from the packaged profile"""
        return self._defaulted

    @property
    def provenance(self) -> List[str]:
        return [
            f"system.{key} is a calibration default, not a measured device value"
            for key in self._defaulted
            if key in self._calibrated
        ]


def _fill_system(system: Dict[str, Any], profile: Dict[str, Any]) -> List[str]:
    """Fill missing system keys from the profile in place; return the filled keys."""
    filled = []
    for key, value in profile.items():
        if key in system:
            continue
        if key.endswith("_ratio") and system.get(key.replace("_ratio", "_hz")) is not None:
            continue
        system[key] = value
        filled.append(key)
    return filled


def _check_system(system: SystemSection) -> None:
    for key in RATE_KEYS:
        value = getattr(system, key)
        if value is None:
            raise ConfigError(f"system.{key} is required")
        if not np.isfinite(value) or value <= 0.0:
            raise ConfigError(f"system.{key} must be a finite positive number, got {value!r}")
    for key in ("g_1_hz", "g_2_hz"):
        value = getattr(system, key)
        if value is None:
            raise ConfigError(f"system.{key} is required")
        if not np.isfinite(value) or value < 0.0:
            raise ConfigError(f"system.{key} must be finite and non-negative, got {value!r}")
    for index in (1, 2):
        hz = getattr(system, f"kappa_e{index}_hz")
        ratio = getattr(system, f"kappa_e{index}_ratio")
        kappa = getattr(system, f"kappa_{index}_hz")
        if hz is not None and ratio is not None:
            raise ConfigError(f"system.kappa_e{index}_hz and system.kappa_e{index}_ratio are mutually exclusive")
        if hz is None and ratio is None:
            raise ConfigError(f"system.kappa_e{index}_hz or system.kappa_e{index}_ratio is required")
        if hz is not None and not 0.0 < hz <= kappa:
            raise ConfigError(f"system.kappa_e{index}_hz must lie in (0, system.kappa_{index}_hz], got {hz!r}")
        if ratio is not None and not 0.0 < ratio <= 1.0:
            raise ConfigError(f"system.kappa_e{index}_ratio must lie in (0, 1], got {ratio!r}")


def parse_config(text: str) -> RunConfig:
    """
    Parse and validate a YAML run configuration.

    Missing system keys are filled from the packaged device profile. Unknown
    keys at any level are rejected.

    Raises:
        ConfigError: naming the offending key path and the violated constraint
    """
    try:
        document = yaml.safe_load(text) if text and text.strip() else {}
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed configuration document: {e}") from e
    document = document or {}
    if not isinstance(document, dict):
        raise ConfigError("configuration document must be a mapping of sections")
    system = document.get("system") or {}
    if not isinstance(system, dict):
        raise ConfigError("system must be a mapping")

    profile = load_default_profile()
    system = dict(system)
    filled = _fill_system(system, profile["system"])

    try:
        config = RunConfig.model_validate({**document, "system": system})
    except ValidationError as e:
        raise ConfigError(describe_validation_error(e)) from e

    _check_system(config.system)
    if config.sweep.p_max_w <= config.sweep.p_min_w:
        raise ConfigError("sweep.p_max_w must exceed sweep.p_min_w")
    try:
        config.to_drive(config.to_params())
    except InvalidParameterError as e:
        raise ConfigError(str(e)) from e

    config._defaulted = tuple(filled)
    config._calibrated = tuple(profile["calibrated_keys"])
    for note in config.provenance:
        logger.info(note)
    return config


def serialize_config(config: RunConfig) -> str:
    """YAML text that parses back to an identical RunConfig."""
    document = config.model_dump(exclude_none=True)
    for key in config.defaulted_keys:
        document["system"].pop(key, None)
    return yaml.safe_dump(document, sort_keys=False, default_flow_style=False)


def load_config(path: Optional[Union[str, Path]]) -> RunConfig:
    """Parse the configuration file at path, or the all-defaults configuration when path is None."""
    if path is None:
        return parse_config("")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read configuration {path}: {e}") from e
    return parse_config(text)
