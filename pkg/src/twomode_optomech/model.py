"""
Domain types, physical constants and unit conventions shared by every module.

Every frequency-like quantity is an angular rate in rad/s. Conversion from Hz
happens only at the configuration boundary through hz_to_rad / rad_to_hz.
"""

import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from scipy import constants

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent / "config"
DEFAULT_PROFILE_PATH = CONFIG_DIR / "default_params.yaml"

TWO_PI = 2.0 * math.pi


class OptomechError(Exception):
    """Base class for all simulator errors"""


class InvalidParameterError(OptomechError, ValueError):
    """A physical parameter or a precondition is violated"""


class ConfigError(InvalidParameterError):
    """A configuration document is malformed or violates a constraint"""


class ConvergenceError(OptomechError):
    """The steady-state equations could not be solved to tolerance"""

    def __init__(self, message: str, best_residual: float):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


class DegenerateAmplitudeError(OptomechError, ArithmeticError):
    """The complex amplitude vanishes, so its phase is undefined"""


class OutputError(OptomechError):
    """Result data could not be written"""

    def __init__(self, path: Path, reason: str):
        super().__init__(f"Cannot write {path}: {reason}")
        self.path = path


def describe_validation_error(error: ValidationError, prefix: str = "") -> str:
    """One "path: message" entry per violated constraint, joined with "; "."""
    details = []
    for item in error.errors():
        path = ".".join(str(part) for part in (prefix, *item["loc"]) if str(part))
        message = item["msg"].removeprefix("Value error, ")
        details.append(f"{path}: {message}" if path else message)
    return "; ".join(details)


class DomainModel(BaseModel):
    """Immutable value object whose construction errors are InvalidParameterError"""

    model_config = ConfigDict(frozen=True)

    def __init__(self, /, **data: Any) -> None:
        try:
            super().__init__(**data)
        except ValidationError as e:
            raise InvalidParameterError(describe_validation_error(e, type(self).__name__)) from e


class PhysConstants(DomainModel):
    """Physical constants used by the drive normalisation"""

    model_config = ConfigDict(frozen=True)

    hbar: float = Field(constants.hbar, description="Reduced Planck constant, J*s (CODATA 2018)")


PHYS = PhysConstants()


def hz_to_rad(frequency_hz: float) -> float:
    """Convert a cyclic frequency in Hz to an angular rate in rad/s."""
    return TWO_PI * frequency_hz


def rad_to_hz(rate: float) -> float:
    """Convert an angular rate in rad/s to a cyclic frequency in Hz."""
    return rate / TWO_PI


class SystemParams(DomainModel):
    """
    Fixed device constants. All rates in rad/s.

    The coupling rates g_1, g_2 may be zero to express decoupled limits;
    every other rate must be strictly positive.
    """

    model_config = ConfigDict(frozen=True)

    omega_1: float = Field(..., description="Left optical mode frequency, rad/s")
    omega_2: float = Field(..., description="Right optical mode frequency, rad/s")
    kappa_1: float = Field(..., description="Total linewidth of the left mode, rad/s")
    kappa_2: float = Field(..., description="Total linewidth of the right mode, rad/s")
    kappa_e1: float = Field(..., description="External decay rate of the left mode, rad/s")
    kappa_e2: float = Field(..., description="External decay rate of the right mode, rad/s")
    omega_m: float = Field(..., description="Mechanical frequency, rad/s")
    q_m: float = Field(..., description="Mechanical quality factor")
    g_1: float = Field(..., description="Single-photon coupling of the left mode, rad/s")
    g_2: float = Field(..., description="Single-photon coupling of the right mode, rad/s")

    @model_validator(mode="after")
    def _check_rates(self) -> "SystemParams":
        for name in ("omega_1", "omega_2", "kappa_1", "kappa_2", "kappa_e1", "kappa_e2", "omega_m", "q_m"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0.0:
                raise InvalidParameterError(f"{name} must be a finite positive number, got {value!r}")
        for name in ("g_1", "g_2"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0.0:
                raise InvalidParameterError(f"{name} must be finite and non-negative, got {value!r}")
        if self.kappa_e1 > self.kappa_1:
            raise InvalidParameterError("kappa_e1 must not exceed kappa_1")
        if self.kappa_e2 > self.kappa_2:
            raise InvalidParameterError("kappa_e2 must not exceed kappa_2")
        if not self.resolved_sideband:
            logger.warning(
                f"Outside the resolved-sideband regime: omega_m={self.omega_m:.4g} rad/s, "
                f"kappa_1={self.kappa_1:.4g} rad/s, kappa_2={self.kappa_2:.4g} rad/s"
            )
        return self

    @property
    def gamma_m(self) -> float:
        """Mechanical damping rate omega_m / Q_m, rad/s"""
        return self.omega_m / self.q_m

    @property
    def resolved_sideband(self) -> bool:
        return self.omega_m > self.kappa_1 and self.omega_m > self.kappa_2


class DriveConfig(DomainModel):
    """Pump and probe settings. Powers in W, detunings in rad/s."""

    model_config = ConfigDict(frozen=True)

    p_left: float = Field(0.0, description="Left pump power, W")
    p_right: float = Field(0.0, description="Right pump power, W")
    p_probe: float = Field(1e-9, description="Probe power, W (linear response does not depend on it)")
    delta_1: float = Field(..., description="Left cavity-pump detuning omega_1 - omega_L, rad/s")
    delta_2: float = Field(..., description="Right cavity-pump detuning omega_2 - omega_R, rad/s")

    @field_validator("p_left", "p_right", "p_probe")
    @classmethod
    def _non_negative_power(cls, value: float) -> float:
        if not math.isfinite(value) or value < 0.0:
            raise InvalidParameterError(f"powers must be finite and non-negative, got {value!r}")
        return value

    @field_validator("delta_1", "delta_2")
    @classmethod
    def _finite_detuning(cls, value: float) -> float:
        if not math.isfinite(value):
            raise InvalidParameterError(f"detunings must be finite, got {value!r}")
        return value

    def pump_frequencies(self, params: SystemParams) -> Tuple[float, float]:
        """Return (omega_L, omega_R), the pump laser frequencies in rad/s."""
        omega_l = params.omega_1 - self.delta_1
        omega_r = params.omega_2 - self.delta_2
        if omega_l <= 0.0 or omega_r <= 0.0:
            raise InvalidParameterError(
                f"pump frequencies must be positive, got omega_L={omega_l!r}, omega_R={omega_r!r}"
            )
        return omega_l, omega_r


class ProbeGrid(DomainModel):
    """Ordered probe-cavity detunings Delta_p = omega_p - omega_1, rad/s"""

    model_config = ConfigDict(frozen=True)

    detunings: Tuple[float, ...]

    @field_validator("detunings")
    @classmethod
    def _strictly_increasing(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if len(value) == 0:
            raise InvalidParameterError("probe grid must not be empty")
        array = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(array)):
            raise InvalidParameterError("probe grid must contain finite detunings")
        if np.any(np.diff(array) <= 0.0):
            raise InvalidParameterError("probe grid must be strictly increasing")
        return value

    @classmethod
    def linear(cls, start: float, stop: float, num: int) -> "ProbeGrid":
        return cls(detunings=tuple(np.linspace(start, stop, num).tolist()))

    @classmethod
    def merged(cls, *grids: "ProbeGrid") -> "ProbeGrid":
        """Union of several grids, sorted, duplicates removed."""
        values = np.unique(np.concatenate([grid.as_array() for grid in grids]))
        return cls(detunings=tuple(values.tolist()))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.detunings, dtype=float)

    def __len__(self) -> int:
        return len(self.detunings)


def drive_amplitude(power: float, kappa: float, omega_laser: float) -> float:
    """
    Drive amplitude |E| = sqrt(2 P kappa / (hbar omega)) of a laser of given power.

    Args:
        power: Laser power, W
        kappa: Total linewidth of the driven mode, rad/s
        omega_laser: Laser angular frequency, rad/s

    Returns:
        Amplitude in the units of the coupled-mode equations
    """
    if not kappa > 0.0:
        raise InvalidParameterError(f"kappa must be positive, got {kappa!r}")
    if not omega_laser > 0.0:
        raise InvalidParameterError(f"omega_laser must be positive, got {omega_laser!r}")
    if power < 0.0:
        raise InvalidParameterError(f"power must be non-negative, got {power!r}")
    if power == 0.0:
        return 0.0
    return math.sqrt(2.0 * power * kappa / (PHYS.hbar * omega_laser))


def delta_probe_to_delta(dp, delta_1: float):
    """Map the probe-cavity detuning Delta_p to the probe-pump beat delta = Delta_p + Delta_1."""
    return dp + delta_1


@lru_cache(maxsize=None)
def _read_profile(path: str) -> Dict[str, Any]:
    with open(path, "r") as file:
        return yaml.safe_load(file)


def load_default_profile(path: Optional[Path] = None) -> Dict[str, Any]:
    """Return the packaged device profile (Hz-denominated) as a fresh dict."""
    profile = _read_profile(str(path or DEFAULT_PROFILE_PATH))
    return {
        "profile": profile.get("profile", "published"),
        "system": dict(profile["system"]),
        "calibrated_keys": list(profile.get("calibrated_keys", [])),
    }


def system_params_from_hz(values: Dict[str, Any]) -> SystemParams:
    """
    Build SystemParams from a Hz-denominated mapping.

    External decay rates are given either in Hz (kappa_eK_hz) or as a
    fraction of the total linewidth (kappa_eK_ratio).
    """
    kappa_1 = hz_to_rad(float(values["kappa_1_hz"]))
    kappa_2 = hz_to_rad(float(values["kappa_2_hz"]))

    def external(index: int, kappa: float) -> float:
        hz_key, ratio_key = f"kappa_e{index}_hz", f"kappa_e{index}_ratio"
        if values.get(hz_key) is not None:
            return hz_to_rad(float(values[hz_key]))
        return float(values[ratio_key]) * kappa

    return SystemParams(
        omega_1=hz_to_rad(float(values["omega_1_hz"])),
        omega_2=hz_to_rad(float(values["omega_2_hz"])),
        kappa_1=kappa_1,
        kappa_2=kappa_2,
        kappa_e1=external(1, kappa_1),
        kappa_e2=external(2, kappa_2),
        omega_m=hz_to_rad(float(values["omega_m_hz"])),
        q_m=float(values["q_m"]),
        g_1=hz_to_rad(float(values["g_1_hz"])),
        g_2=hz_to_rad(float(values["g_2_hz"])),
    )


def paper_default_params() -> SystemParams:
    """Device constants of the published parameter table plus calibrated couplings."""
    return system_params_from_hz(load_default_profile()["system"])


def red_sideband_drive(params: SystemParams, p_left: float, p_right: float, p_probe: float = 1e-9) -> DriveConfig:
    """Both pumps one mechanical frequency below their cavities."""
    return DriveConfig(
        p_left=p_left, p_right=p_right, p_probe=p_probe, delta_1=params.omega_m, delta_2=params.omega_m
    )


def snapshot(params: SystemParams, drive: DriveConfig, extra: Optional[Iterable[Tuple[str, Any]]] = None) -> Dict[str, Any]:
    """Flat, ordered record of everything needed to rerun a computation."""
    record: Dict[str, Any] = {}
    record.update({f"params.{key}": value for key, value in params.model_dump().items()})
    record.update({f"drive.{key}": value for key, value in drive.model_dump().items()})
    for key, value in extra or ():
        record[key] = value
    return record
