import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twomode_optomech.model import (
    PHYS,
    DegenerateAmplitudeError,
    InvalidParameterError,
    SystemParams,
    paper_default_params,
    red_sideband_drive,
)
from twomode_optomech.response import (
    bare_transmission,
    effective_linewidth,
    evaluate_point,
    group_delay,
    mech_denominator,
    reflection,
    transmission,
    upper_sideband,
)
from twomode_optomech.steady_state import solve_steady_state

UW = 1e-6

PARAMS = paper_default_params()
FIG3_DRIVE = red_sideband_drive(PARAMS, 10 * UW, 0.1 * UW)
FIG3_STEADY = solve_steady_state(PARAMS, FIG3_DRIVE)


class GaussianRational:
    """Complex number with exact rational parts."""

    def __init__(self, re, im=0):
        self.re, self.im = Fraction(re), Fraction(im)

    def __add__(self, other):
        return GaussianRational(self.re + other.re, self.im + other.im)

    def __sub__(self, other):
        return GaussianRational(self.re - other.re, self.im - other.im)

    def __mul__(self, other):
        return GaussianRational(self.re * other.re - self.im * other.im, self.re * other.im + self.im * other.re)

    def __truediv__(self, other):
        norm = other.re**2 + other.im**2
        return GaussianRational(
            (self.re * other.re + self.im * other.im) / norm, (self.im * other.re - self.re * other.im) / norm
        )

    def __complex__(self):
        return complex(float(self.re), float(self.im))


def exact_mech_denominator(params, steady, delta):
    """Unfactored mechanical denominator evaluated without rounding."""
    delta = Fraction(delta)
    omega_m = Fraction(params.omega_m)
    total = GaussianRational(0)
    for g, n, kappa, detuning in (
        (params.g_1, steady.n_1, params.kappa_1, steady.delta_1_eff),
        (params.g_2, steady.n_2, params.kappa_2, steady.delta_2_eff),
    ):
        base = GaussianRational(kappa, -delta)
        detuning = Fraction(detuning)
        numerator = GaussianRational(2 * detuning * Fraction(g) ** 2 * Fraction(n))
        total = total + numerator / (base * base + GaussianRational(detuning**2))
    mechanical = GaussianRational(omega_m**2 - delta**2, -delta * omega_m / Fraction(params.q_m))
    return total - mechanical / GaussianRational(omega_m)


def exact_emitted_fraction(params, steady, delta):
    """kappa_e1 / f - i g_1^2 n_1 kappa_e1 / (d f^2) with f = kappa_1 + i (delta_1_eff - delta)."""
    kappa_e1 = GaussianRational(params.kappa_e1)
    filter_ = GaussianRational(params.kappa_1, Fraction(steady.delta_1_eff) - Fraction(delta))
    coupling = GaussianRational(0, -Fraction(params.g_1) ** 2 * Fraction(steady.n_1))
    denominator = exact_mech_denominator(params, steady, delta) * filter_ * filter_
    return kappa_e1 / filter_ + coupling * kappa_e1 / denominator


def test_mech_denominator_without_photons(params, empty_steady):
    assert mech_denominator(params, empty_steady, params.omega_m) == pytest.approx(1j * params.gamma_m, rel=1e-12)
    assert mech_denominator(params, empty_steady, 0.0) == pytest.approx(-params.omega_m, rel=1e-15)


def test_mech_denominator_matches_direct_expression(params):
    drive = red_sideband_drive(params, 1 * UW, 0.1 * UW)
    steady = solve_steady_state(params, drive)
    delta = params.omega_m
    expected = 0j
    for g, n, kappa, detuning in (
        (params.g_1, steady.n_1, params.kappa_1, steady.delta_1_eff),
        (params.g_2, steady.n_2, params.kappa_2, steady.delta_2_eff),
    ):
        expected += 2 * detuning * g**2 * n / ((kappa - 1j * delta) ** 2 + detuning**2)
    expected -= (params.omega_m**2 - delta**2 - 1j * delta * params.gamma_m) / params.omega_m
    assert abs(mech_denominator(params, steady, delta) - expected) <= 1e-10 * abs(expected)


def test_mech_denominator_matches_exact_arithmetic(params):
    drive = red_sideband_drive(params, 1 * UW, 0.1 * UW)
    steady = solve_steady_state(params, drive)
    assert steady.n_1 > 0.0 and steady.n_2 > 0.0
    expected = complex(exact_mech_denominator(params, steady, params.omega_m))
    assert abs(mech_denominator(params, steady, params.omega_m) - expected) <= 1e-10 * abs(expected)


def test_mech_denominator_broadcasts(params, fig3_steady):
    deltas = np.linspace(0.9, 1.1, 7) * params.omega_m
    vector = mech_denominator(params, fig3_steady, deltas)
    assert vector.shape == (7,)
    assert vector[3] == pytest.approx(mech_denominator(params, fig3_steady, deltas[3]), rel=1e-14)


def test_bare_cavity_transmission_at_resonance(params, undriven, empty_steady):
    t = transmission(params, undriven, empty_steady, undriven.delta_1)
    assert abs(t) == pytest.approx(0.8, abs=1e-12)
    assert abs(t) ** 2 == pytest.approx(0.64, abs=1e-12)
    assert reflection(params, undriven, empty_steady, undriven.delta_1) == pytest.approx(0.2, abs=1e-12)


def test_far_off_resonance_transmission_tends_to_one(params, undriven, empty_steady):
    t = transmission(params, undriven, empty_steady, undriven.delta_1 + 1e4 * params.kappa_1)
    assert abs(t - 1.0) < 1e-4


def test_bare_transmission_ignores_mechanics(params, fig3_drive, fig3_steady):
    far = fig3_drive.delta_1 + 2.5 * params.kappa_1
    assert bare_transmission(params, fig3_steady, far) == pytest.approx(
        transmission(params, fig3_drive, fig3_steady, far), rel=1e-2
    )
    centre = fig3_drive.delta_1
    assert abs(transmission(params, fig3_drive, fig3_steady, centre)) > abs(bare_transmission(params, fig3_steady, centre))


def test_upper_sideband_without_photons_is_cavity_filter(params, undriven, empty_steady):
    drive = undriven.model_copy(update={"p_probe": 1e-9})
    delta = params.omega_m + 0.3 * params.kappa_1
    omega_p = params.omega_1 - drive.delta_1 + delta
    e_probe = np.sqrt(2 * drive.p_probe * params.kappa_1 / (PHYS.hbar * omega_p))
    expected = np.sqrt(params.kappa_e1) * e_probe / (params.kappa_1 + 1j * empty_steady.delta_1_eff - 1j * delta)
    assert upper_sideband(params, drive, empty_steady, delta) == pytest.approx(expected, rel=1e-9)


def test_upper_sideband_is_linear_in_probe_amplitude(params, fig3_drive, fig3_steady):
    delta = params.omega_m
    single = upper_sideband(params, fig3_drive, fig3_steady, delta)
    doubled = upper_sideband(params, fig3_drive.model_copy(update={"p_probe": 4 * fig3_drive.p_probe}), fig3_steady, delta)
    assert doubled == pytest.approx(2 * single, rel=1e-14)


def test_upper_sideband_matches_exact_arithmetic(params, fig3_drive, fig3_steady):
    delta = params.omega_m
    assert fig3_steady.n_1 > 0.0
    omega_l, _ = fig3_drive.pump_frequencies(params)
    e_probe = math.sqrt(2.0 * fig3_drive.p_probe * params.kappa_1 / (PHYS.hbar * (omega_l + delta)))
    emitted = upper_sideband(params, fig3_drive, fig3_steady, delta) * math.sqrt(params.kappa_e1) / e_probe
    expected = complex(exact_emitted_fraction(params, fig3_steady, delta))
    assert abs(emitted - expected) <= 1e-10 * abs(expected)


def test_upper_sideband_needs_probe(params, fig3_drive, fig3_steady):
    with pytest.raises(InvalidParameterError):
        upper_sideband(params, fig3_drive.model_copy(update={"p_probe": 0.0}), fig3_steady, params.omega_m)


def test_transmission_is_independent_of_probe_power(params, fig3_drive, fig3_steady):
    deltas = fig3_drive.delta_1 + np.linspace(-1e7, 1e7, 11)
    strong = fig3_drive.model_copy(update={"p_probe": 1e-3})
    np.testing.assert_array_equal(
        transmission(params, fig3_drive, fig3_steady, deltas), transmission(params, strong, fig3_steady, deltas)
    )


@settings(max_examples=60, deadline=None)
@given(offset=st.floats(min_value=-3.0, max_value=3.0, allow_nan=False))
def test_reflection_plus_transmission_is_one(offset):
    delta = FIG3_DRIVE.delta_1 + offset * PARAMS.kappa_1
    total = reflection(PARAMS, FIG3_DRIVE, FIG3_STEADY, delta) + transmission(PARAMS, FIG3_DRIVE, FIG3_STEADY, delta)
    assert abs(total - 1.0) <= 1e-15


def test_effective_linewidth(params, fig3_steady, empty_steady):
    bare = effective_linewidth(params, empty_steady)
    assert bare.cooperativity_1 == 0.0
    assert bare.gamma_eff == params.gamma_m

    linewidth = effective_linewidth(params, fig3_steady)
    doubled = effective_linewidth(params, fig3_steady.model_copy(update={"n_1": 2 * fig3_steady.n_1}))
    assert doubled.cooperativity_1 == pytest.approx(2 * linewidth.cooperativity_1, rel=1e-14)
    assert linewidth.gamma_eff == pytest.approx(params.gamma_m * (1 + linewidth.cooperativity_1), rel=1e-14)
    assert linewidth.gamma_total == pytest.approx(
        params.gamma_m * (1 + linewidth.cooperativity_1 + linewidth.cooperativity_2), rel=1e-14
    )


def test_calibrated_cooperativities(params):
    steady = solve_steady_state(params, red_sideband_drive(params, 0.1 * UW, 0.1 * UW))
    linewidth = effective_linewidth(params, steady)
    assert linewidth.cooperativity_1 == pytest.approx(8.18, rel=0.05)
    assert linewidth.cooperativity_2 == pytest.approx(8.28, rel=0.05)


def test_bare_cavity_group_delay_matches_closed_form(params, undriven, empty_steady):
    eta = params.kappa_e1 / params.kappa_1
    expected = -eta / (params.kappa_1 * (1 - eta))
    tau = group_delay(params, undriven, empty_steady, undriven.delta_1)
    assert tau == pytest.approx(expected, rel=1e-6)
    assert tau == pytest.approx(-7.6517e-11, rel=1e-4)


def test_window_delays_transmission_and_advances_reflection(params, fig3_drive, fig3_steady):
    assert group_delay(params, fig3_drive, fig3_steady, fig3_drive.delta_1) > 0.0
    assert group_delay(params, fig3_drive, fig3_steady, fig3_drive.delta_1, "reflection") < 0.0


def test_group_delay_richardson_ratio(params, fig3_drive, fig3_steady):
    step = effective_linewidth(params, fig3_steady).gamma_eff / 50
    coarse, medium, fine = (
        group_delay(params, fig3_drive, fig3_steady, fig3_drive.delta_1, step=step / factor) for factor in (1, 2, 4)
    )
    assert (coarse - medium) / (medium - fine) == pytest.approx(4.0, rel=0.25)


def test_group_delay_matches_unwrapped_phase_gradient(params, fig3_drive, fig3_steady):
    gamma_eff = effective_linewidth(params, fig3_steady).gamma_eff
    dp = np.linspace(-10 * gamma_eff, 10 * gamma_eff, 2001)
    t = transmission(params, fig3_drive, fig3_steady, dp + fig3_drive.delta_1)
    assert np.all(np.abs(t) > 0.01)
    phase_slope = np.gradient(np.unwrap(np.angle(t)), dp)[1:-1]
    delays = np.array([group_delay(params, fig3_drive, fig3_steady, x + fig3_drive.delta_1) for x in dp[1:-1]])
    np.testing.assert_allclose(delays, phase_slope, rtol=1e-2, atol=1e-3 * np.max(np.abs(delays)))


def test_degenerate_amplitude(params, undriven, empty_steady):
    critical = SystemParams(**{**params.model_dump(), "kappa_e1": params.kappa_1})
    with pytest.raises(DegenerateAmplitudeError):
        group_delay(critical, undriven, empty_steady, undriven.delta_1)


@pytest.mark.parametrize("step", [0.0, -1.0])
def test_group_delay_rejects_bad_step(params, fig3_drive, fig3_steady, step):
    with pytest.raises(InvalidParameterError):
        group_delay(params, fig3_drive, fig3_steady, fig3_drive.delta_1, step=step)


def test_group_delay_rejects_unknown_channel(params, fig3_drive, fig3_steady):
    with pytest.raises(InvalidParameterError):
        group_delay(params, fig3_drive, fig3_steady, fig3_drive.delta_1, which="absorption")


def test_evaluate_point(params, fig3_drive, fig3_steady):
    point = evaluate_point(params, fig3_drive, fig3_steady, 0.0)
    assert point.t == transmission(params, fig3_drive, fig3_steady, fig3_drive.delta_1)
    assert point.t + point.r == pytest.approx(1.0, abs=1e-15)
    assert point.phase_t == pytest.approx(np.angle(point.t), abs=0.0)
    assert -np.pi < point.phase_t <= np.pi
    assert point.group_delay_t > 0.0
    assert point.group_delay_r < 0.0

    quick = evaluate_point(params, fig3_drive, fig3_steady, 0.0, with_delay=False)
    assert quick.group_delay_t is None and quick.group_delay_r is None
