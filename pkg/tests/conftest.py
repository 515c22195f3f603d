import pytest

from twomode_optomech.model import DriveConfig, SystemParams, paper_default_params, red_sideband_drive
from twomode_optomech.steady_state import SteadyState, solve_steady_state

UW = 1e-6


@pytest.fixture(scope="session")
def params() -> SystemParams:
    return paper_default_params()


@pytest.fixture(scope="session")
def fig3_drive(params) -> DriveConfig:
    return red_sideband_drive(params, 10 * UW, 0.1 * UW)


@pytest.fixture(scope="session")
def fig3_steady(params, fig3_drive) -> SteadyState:
    return solve_steady_state(params, fig3_drive)


@pytest.fixture(scope="session")
def undriven(params) -> DriveConfig:
    return red_sideband_drive(params, 0.0, 0.0)


@pytest.fixture(scope="session")
def empty_steady(params) -> SteadyState:
    return SteadyState(
        n_1=0.0, n_2=0.0, q_s=0.0, delta_1_eff=params.omega_m, delta_2_eff=params.omega_m, residual=0.0
    )
