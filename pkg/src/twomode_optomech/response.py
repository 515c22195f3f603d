"""
Linearised probe response of the left cavity.

All functions accept a scalar or a numpy array for the probe-pump beat
delta = omega_p - omega_L and broadcast over it.
"""

import logging
from typing import Literal, Optional, Union

import numpy as np
from pydantic import ConfigDict, Field, field_validator

from .model import (
    PHYS,
    DegenerateAmplitudeError,
    DomainModel,
    DriveConfig,
    InvalidParameterError,
    SystemParams,
    delta_probe_to_delta,
)
from .steady_state import SteadyState

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]
Channel = Literal["transmission", "reflection"]

DEGENERATE_AMPLITUDE = 1e-15
_MIN_STEP_FACTOR = 1e3 * np.finfo(float).eps


class ResponsePoint(DomainModel):
    """Probe response at one probe-cavity detuning"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    delta_p: float = Field(..., description="Probe-cavity detuning, rad/s")
    t: complex = Field(..., description="Complex transmission amplitude")
    r: complex = Field(..., description="Complex reflection amplitude")
    phase_t: float = Field(..., description="arg(t) in (-pi, pi]")
    group_delay_t: Optional[float] = Field(None, description="Transmission group delay, s")
    group_delay_r: Optional[float] = Field(None, description="Reflection group delay, s")

    @field_validator("t", "r")
    @classmethod
    def _finite(cls, value: complex) -> complex:
        value = complex(value)
        if not (np.isfinite(value.real) and np.isfinite(value.imag)):
            raise InvalidParameterError(f"response amplitudes must be finite, got {value!r}")
        return value


class EffectiveLinewidth(DomainModel):
    """Pump-modified mechanical damping"""

    model_config = ConfigDict(frozen=True)

    cooperativity_1: float = Field(..., ge=0.0, description="C_1 = g_1^2 n_1 / (kappa_1 gamma_m)")
    gamma_eff: float = Field(..., gt=0.0, description="gamma_m (1 + C_1), rad/s")
    cooperativity_2: float = Field(0.0, ge=0.0, description="C_2 = g_2^2 n_2 / (kappa_2 gamma_m)")
    gamma_total: float = Field(..., gt=0.0, description="gamma_m (1 + C_1 + C_2), rad/s")


def principal_phase(amplitude: ArrayLike) -> ArrayLike:
    """arg() mapped onto (-pi, pi]."""
    phase = np.angle(amplitude)
    if np.ndim(phase) == 0:
        return np.pi if phase <= -np.pi else float(phase)
    return np.where(phase <= -np.pi, np.pi, phase)


def mech_denominator(params: SystemParams, steady: SteadyState, delta: ArrayLike) -> ArrayLike:
    """
    d(delta) = sum_k 2 D_k g_k^2 n_k / ((kappa_k - i delta)^2 + D_k^2) - (omega_m^2 - delta^2 - i delta gamma_m) / omega_m

    D_k are the effective detunings of the steady state. The quadratic forms are
    evaluated in factored form to keep precision near the mechanical resonance.
    """
    delta = np.asarray(delta, dtype=float)
    total = np.zeros(delta.shape, dtype=complex)
    for g, n, kappa, detuning in (
        (params.g_1, steady.n_1, params.kappa_1, steady.delta_1_eff),
        (params.g_2, steady.n_2, params.kappa_2, steady.delta_2_eff),
    ):
        if g == 0.0 or n == 0.0:
            continue
        base = kappa - 1j * delta
        total += 2.0 * detuning * g**2 * n / ((base + 1j * detuning) * (base - 1j * detuning))
    mechanical = ((params.omega_m - delta) * (params.omega_m + delta) - 1j * delta * params.gamma_m) / params.omega_m
    result = total - mechanical
    return complex(result) if result.ndim == 0 else result


def _emitted_fraction(params: SystemParams, steady: SteadyState, delta: ArrayLike) -> ArrayLike:
    """sqrt(kappa_e1) a_1+ / E_p, the cavity field leaving through the probe port."""
    delta = np.asarray(delta, dtype=float)
    filter_ = params.kappa_1 + 1j * steady.delta_1_eff - 1j * delta
    fraction = params.kappa_e1 / filter_
    coupling = params.g_1**2 * steady.n_1
    if coupling != 0.0:
        fraction = fraction - 1j * coupling * params.kappa_e1 / (mech_denominator(params, steady, delta) * filter_**2)
    return complex(fraction) if np.ndim(fraction) == 0 else fraction


def upper_sideband(params: SystemParams, drive: DriveConfig, steady: SteadyState, delta: ArrayLike) -> ArrayLike:
    """
    Intracavity anti-Stokes amplitude a_1+ at the probe frequency.

    Args:
        params: Device constants
        drive: Pump and probe settings, p_probe must be positive
        steady: Operating point solved for the same params and drive
        delta: Probe-pump beat, rad/s

    Returns:
        Complex amplitude in the units of the coupled-mode equations
    """
    if drive.p_probe <= 0.0:
        raise InvalidParameterError("upper_sideband needs a positive probe power")
    omega_l, _ = drive.pump_frequencies(params)
    omega_p = omega_l + np.asarray(delta, dtype=float)
    if np.any(omega_p <= 0.0):
        raise InvalidParameterError("probe frequency must be positive")
    e_probe = np.sqrt(2.0 * drive.p_probe * params.kappa_1 / (PHYS.hbar * omega_p))
    amplitude = _emitted_fraction(params, steady, delta) * e_probe / np.sqrt(params.kappa_e1)
    return complex(amplitude) if np.ndim(amplitude) == 0 else amplitude


def transmission(params: SystemParams, drive: DriveConfig, steady: SteadyState, delta: ArrayLike) -> ArrayLike:
    """t = (E_p - sqrt(kappa_e1) a_1+) / E_p. Independent of the probe power."""
    return 1.0 - _emitted_fraction(params, steady, delta)


def reflection(params: SystemParams, drive: DriveConfig, steady: SteadyState, delta: ArrayLike) -> ArrayLike:
    """r = sqrt(kappa_e1) a_1+ / E_p, so that r + t = 1."""
    return _emitted_fraction(params, steady, delta)


def bare_transmission(params: SystemParams, steady: SteadyState, delta: ArrayLike) -> ArrayLike:
    """Cavity-only transmission with the mechanical interference term removed."""
    delta = np.asarray(delta, dtype=float)
    t = 1.0 - params.kappa_e1 / (params.kappa_1 + 1j * steady.delta_1_eff - 1j * delta)
    return complex(t) if t.ndim == 0 else t


def effective_linewidth(params: SystemParams, steady: SteadyState) -> EffectiveLinewidth:
    cooperativity_1 = params.g_1**2 * steady.n_1 / (params.kappa_1 * params.gamma_m)
    cooperativity_2 = params.g_2**2 * steady.n_2 / (params.kappa_2 * params.gamma_m)
    return EffectiveLinewidth(
        cooperativity_1=cooperativity_1,
        gamma_eff=params.gamma_m * (1.0 + cooperativity_1),
        cooperativity_2=cooperativity_2,
        gamma_total=params.gamma_m * (1.0 + cooperativity_1 + cooperativity_2),
    )


def default_delay_step(params: SystemParams, steady: SteadyState, which: Channel = "transmission") -> float:
    """gamma_eff / 50 for transmission, gamma_m / 50 for reflection, floored at 1e3 eps omega_m."""
    if which == "reflection":
        step = params.gamma_m / 50.0
    else:
        step = effective_linewidth(params, steady).gamma_eff / 50.0
    return max(step, _MIN_STEP_FACTOR * params.omega_m)


def group_delay(
    params: SystemParams,
    drive: DriveConfig,
    steady: SteadyState,
    delta: float,
    which: Channel = "transmission",
    step: Optional[float] = None,
) -> float:
    """
    Group delay Im[s'(delta) / s(delta)] of the transmitted or reflected probe.

    The derivative is a central difference of the complex amplitude, which
    equals d arg(s) / d omega_p without any phase unwrapping.

    Args:
        params: Device constants
        drive: Pump and probe settings
        steady: Operating point for the same params and drive
        delta: Probe-pump beat at which the delay is reported, rad/s
        which: "transmission" or "reflection"
        step: Finite-difference step, rad/s; defaults to default_delay_step

    Returns:
        Delay in seconds, negative for a group advance

    Raises:
        DegenerateAmplitudeError: |s(delta)| < 1e-15
    """
    if which == "transmission":
        amplitude = transmission
    elif which == "reflection":
        amplitude = reflection
    else:
        raise InvalidParameterError(f"which must be 'transmission' or 'reflection', got {which!r}")
    if step is None:
        step = default_delay_step(params, steady, which)
    if not step > 0.0:
        raise InvalidParameterError(f"step must be positive, got {step!r}")

    delta = float(delta)
    centre = amplitude(params, drive, steady, delta)
    if abs(centre) < DEGENERATE_AMPLITUDE:
        raise DegenerateAmplitudeError(f"|{which}| = {abs(centre):.3e} at delta = {delta!r} rad/s, phase undefined")
    upper = amplitude(params, drive, steady, delta + step)
    lower = amplitude(params, drive, steady, delta - step)
    derivative = (upper - lower) / (2.0 * step)
    return float((derivative / centre).imag)


def evaluate_point(
    params: SystemParams,
    drive: DriveConfig,
    steady: SteadyState,
    delta_p: float,
    with_delay: bool = True,
) -> ResponsePoint:
    """Complete response record at one probe-cavity detuning."""
    delta = delta_probe_to_delta(float(delta_p), drive.delta_1)
    r = reflection(params, drive, steady, delta)
    t = 1.0 - r
    delays = {}
    if with_delay:
        for key, which in (("group_delay_t", "transmission"), ("group_delay_r", "reflection")):
            try:
                delays[key] = group_delay(params, drive, steady, delta, which)
            except DegenerateAmplitudeError as e:
                logger.warning(f"Skipping {which} delay: {e}")
    return ResponsePoint(delta_p=float(delta_p), t=t, r=r, phase_t=principal_phase(t), **delays)
