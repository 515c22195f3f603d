"""
Self-consistent pump photon numbers and static mechanical displacement.

The intracavity photon numbers solve

    n_k = kappa_ek E_k^2 / (kappa_k^2 + (Delta_k - g_k Q_s)^2)
    Q_s = (2 / omega_m) (g_1 n_1 +/- g_2 n_2)

with the "+" sign by default (both radiation pressures push the same
mechanical coordinate). The "-" variant reproduces the sign printed in the
coupled photon-number equations and is kept for comparison.
"""

import logging
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage, optimize

from .model import (
    ConvergenceError,
    DomainModel,
    DriveConfig,
    InvalidParameterError,
    SystemParams,
    drive_amplitude,
)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10_000

_TINY = 1e-300
# normalised distance under which two fixed points are the same branch
_SAME_BRANCH = 1e-7

SignConvention = Literal["plus", "minus"]


class SolverOptions(BaseModel):
    """Knobs of the steady-state solver"""

    model_config = ConfigDict(frozen=True)

    tol: float = Field(DEFAULT_TOL, gt=0.0, description="Relative residual target")
    max_iter: int = Field(DEFAULT_MAX_ITER, ge=1, description="Fixed-point iteration budget")
    damping: float = Field(0.5, gt=0.0, le=1.0, description="Fixed-point mixing factor alpha")
    sign_convention: SignConvention = Field("plus", description="Sign of g_2 n_2 in the displacement")
    self_consistent: bool = Field(True, description="False keeps the undressed photon numbers")
    scan_resolution: int = Field(64, ge=16, description="Points per axis of the branch scan")
    continuation_steps: int = Field(200, ge=1, description="Power ramp steps for branch selection")


class SteadyState(DomainModel):
    """Solved operating point of both pumps"""

    model_config = ConfigDict(frozen=True)

    n_1: float = Field(..., ge=0.0, description="Left pump photon number")
    n_2: float = Field(..., ge=0.0, description="Right pump photon number")
    q_s: float = Field(..., description="Static dimensionless displacement")
    delta_1_eff: float = Field(..., description="Effective left detuning, rad/s")
    delta_2_eff: float = Field(..., description="Effective right detuning, rad/s")
    residual: float = Field(..., ge=0.0, description="Max relative residual of the photon-number equations")
    branch_count: int = Field(1, ge=1, description="Number of distinct fixed points found")


class _PhotonNumberEquations:
    """Right-hand sides of the coupled photon-number equations for one drive."""

    def __init__(self, params: SystemParams, drive: DriveConfig, sign_convention: SignConvention = "plus"):
        omega_l, omega_r = drive.pump_frequencies(params)
        e_left = drive_amplitude(drive.p_left, params.kappa_1, omega_l)
        e_right = drive_amplitude(drive.p_right, params.kappa_2, omega_r)
        sign = 1.0 if sign_convention == "plus" else -1.0

        self.source = np.array([params.kappa_e1 * e_left**2, params.kappa_e2 * e_right**2])
        self.kappa = np.array([params.kappa_1, params.kappa_2])
        self.delta = np.array([drive.delta_1, drive.delta_2])
        self.g = np.array([params.g_1, params.g_2])
        self.q_weights = (2.0 / params.omega_m) * np.array([params.g_1, sign * params.g_2])

    @property
    def driven(self) -> bool:
        return bool(np.any(self.source > 0.0))

    @property
    def n_max(self) -> np.ndarray:
        """Undressed maximum kappa_e E^2 / kappa^2 of each photon number."""
        return self.source / self.kappa**2

    def displacement(self, n: np.ndarray) -> np.ndarray:
        return np.tensordot(self.q_weights, np.asarray(n, dtype=float), axes=(0, 0))

    def rhs(self, n: np.ndarray) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        q = self.displacement(n)
        shape = (2,) + (1,) * np.ndim(q)
        detuning = self.delta.reshape(shape) - self.g.reshape(shape) * q
        return self.source.reshape(shape) / (self.kappa.reshape(shape) ** 2 + detuning**2)

    def undressed(self) -> np.ndarray:
        return self.source / (self.kappa**2 + self.delta**2)

    def jacobian(self, n: np.ndarray) -> np.ndarray:
        """d rhs_k / d n_j at n."""
        detuning = self.delta - self.g * self.displacement(n)
        denominator = self.kappa**2 + detuning**2
        dfk_dq = 2.0 * self.source * detuning * self.g / denominator**2
        return np.outer(dfk_dq, self.q_weights)

    def relative_residual(self, n: np.ndarray, f: Optional[np.ndarray] = None) -> float:
        f = self.rhs(n) if f is None else f
        scale = np.where(f > 0.0, f, _TINY)
        return float(np.max(np.abs(np.asarray(n) - f) / scale))

    def normaliser(self) -> np.ndarray:
        n_max = self.n_max
        return np.where(n_max > 0.0, n_max, 1.0)


def fixed_point_residual(
    params: SystemParams,
    drive: DriveConfig,
    n_1: float,
    n_2: float,
    sign_convention: SignConvention = "plus",
) -> float:
    """Max relative residual |n_k - rhs_k(n)| / rhs_k(n) of the photon-number equations."""
    equations = _PhotonNumberEquations(params, drive, sign_convention)
    return equations.relative_residual(np.array([n_1, n_2], dtype=float))


def _fixed_point(equations: _PhotonNumberEquations, options: SolverOptions) -> Tuple[np.ndarray, float]:
    """Damped iteration n <- (1 - alpha) n + alpha rhs(n) from the undressed values."""
    n = equations.undressed()
    best_n, best_residual = n, np.inf
    stalled = 0
    for iteration in range(options.max_iter):
        f = equations.rhs(n)
        residual = equations.relative_residual(n, f)
        if residual < best_residual:
            if residual < 0.5 * best_residual:
                stalled = 0
            best_n, best_residual = n, residual
        else:
            stalled += 1
        if residual <= options.tol:
            logger.debug(f"Fixed point converged after {iteration} iterations")
            return n, residual
        if stalled > 100:
            logger.debug(f"Fixed point stagnated at residual {best_residual:.3e}")
            break
        n = (1.0 - options.damping) * n + options.damping * f
    return best_n, best_residual


def _newton(
    equations: _PhotonNumberEquations, n0: np.ndarray, tol: float, max_steps: int = 60
) -> Tuple[np.ndarray, float]:
    """Newton polish of n - rhs(n) = 0 on the driven components."""
    active = equations.source > 0.0
    n = np.where(active, np.asarray(n0, dtype=float), 0.0)
    best_n, best_residual = n, equations.relative_residual(n)
    for _ in range(max_steps):
        f = equations.rhs(n)
        residual = equations.relative_residual(n, f)
        if residual < best_residual:
            best_n, best_residual = n, residual
        if residual <= tol:
            return n, residual
        jacobian = np.eye(2) - equations.jacobian(n)
        sub = np.ix_(active, active)
        try:
            step = np.linalg.solve(jacobian[sub], (n - f)[active])
        except np.linalg.LinAlgError:
            break
        updated = n.copy()
        updated[active] = np.maximum(n[active] - step, 0.0)
        if not np.all(np.isfinite(updated)):
            break
        n = updated
    return best_n, best_residual


def _build_state(
    equations: _PhotonNumberEquations, n: np.ndarray, residual: float, branch_count: int
) -> SteadyState:
    n = np.maximum(np.asarray(n, dtype=float), 0.0)
    q_s = float(equations.displacement(n))
    delta_eff = equations.delta - equations.g * q_s
    return SteadyState(
        n_1=float(n[0]),
        n_2=float(n[1]),
        q_s=q_s,
        delta_1_eff=float(delta_eff[0]),
        delta_2_eff=float(delta_eff[1]),
        residual=residual,
        branch_count=branch_count,
    )


def _distinct(points: List[Tuple[np.ndarray, float]], normaliser: np.ndarray) -> List[Tuple[np.ndarray, float]]:
    kept: List[Tuple[np.ndarray, float]] = []
    for n, residual in points:
        for index, (other, other_residual) in enumerate(kept):
            if np.max(np.abs(n - other) / normaliser) <= _SAME_BRANCH:
                if residual < other_residual:
                    kept[index] = (n, residual)
                break
        else:
            kept.append((n, residual))
    return sorted(kept, key=lambda item: (item[0][0], item[0][1]))


def _cells(length: int) -> Tuple[np.ndarray, np.ndarray]:
    if length == 1:
        index = np.array([0])
        return index, index
    index = np.arange(length - 1)
    return index, index + 1


def _scan(equations: _PhotonNumberEquations, resolution: int, tol: float) -> List[Tuple[np.ndarray, float]]:
    """Grid scan over [0, n_max]^2, Powell-hybrid refinement and Newton polish of every candidate."""
    n_max = equations.n_max
    normaliser = equations.normaliser()
    active = n_max > 0.0
    axes = [np.linspace(0.0, n_max[k], resolution) if active[k] else np.array([0.0]) for k in range(2)]
    grid = np.stack(np.meshgrid(axes[0], axes[1], indexing="ij"))
    scaled = (grid - equations.rhs(grid)) / normaliser.reshape(2, 1, 1)

    i_lo, i_hi = _cells(len(axes[0]))
    j_lo, j_hi = _cells(len(axes[1]))
    brackets = np.ones((len(i_lo), len(j_lo)), dtype=bool)
    for component in range(2):
        corners = np.stack([
            scaled[component][np.ix_(i_lo, j_lo)],
            scaled[component][np.ix_(i_hi, j_lo)],
            scaled[component][np.ix_(i_lo, j_hi)],
            scaled[component][np.ix_(i_hi, j_hi)],
        ])
        brackets &= (corners.min(axis=0) <= 0.0) & (corners.max(axis=0) >= 0.0)

    starts = [
        0.5 * (grid[:, i_lo[i], j_lo[j]] + grid[:, i_hi[i], j_hi[j]])
        for i, j in zip(*np.nonzero(brackets))
    ]
    norm = np.max(np.abs(scaled), axis=0)
    minima = (ndimage.minimum_filter(norm, size=3, mode="nearest") == norm)
    starts.extend(grid[:, i, j] for i, j in zip(*np.nonzero(minima)))

    def scaled_residual(u: np.ndarray) -> np.ndarray:
        n = np.zeros(2)
        n[active] = u * normaliser[active]
        return ((n - equations.rhs(n)) / normaliser)[active]

    found: List[Tuple[np.ndarray, float]] = []
    for start in starts:
        solution = optimize.root(scaled_residual, start[active] / normaliser[active], method="hybr")
        n = np.zeros(2)
        n[active] = np.maximum(solution.x, 0.0) * normaliser[active]
        n, residual = _newton(equations, n, tol)
        found.append((n, residual))
    return _distinct(found, normaliser)


def scan_branches(
    params: SystemParams,
    drive: DriveConfig,
    grid_resolution: int = 64,
    *,
    options: Optional[SolverOptions] = None,
) -> List[SteadyState]:
    """
    All fixed points of the photon-number equations, sorted by n_1.

    A coarse grid over [0, n_max]^2 (n_max = kappa_e E^2 / kappa^2 per cavity)
    brackets the roots; each candidate is refined locally. When nothing meets
    the tolerance the best candidate is returned with its residual.
    """
    options = options or SolverOptions()
    if grid_resolution < 16:
        raise InvalidParameterError(f"grid_resolution must be at least 16, got {grid_resolution}")
    equations = _PhotonNumberEquations(params, drive, options.sign_convention)
    if not equations.driven:
        return [_build_state(equations, np.zeros(2), 0.0, 1)]

    candidates = _scan(equations, grid_resolution, options.tol)
    converged = [item for item in candidates if item[1] <= options.tol]
    if not converged:
        best = min(candidates, key=lambda item: item[1])
        logger.warning(f"Branch scan found no fixed point within tolerance; best residual {best[1]:.3e}")
        return [_build_state(equations, best[0], best[1], 1)]
    return [_build_state(equations, n, residual, len(converged)) for n, residual in converged]


def _continue_from_zero(params: SystemParams, drive: DriveConfig, options: SolverOptions) -> np.ndarray:
    """Track the branch born at zero power while ramping both pumps up to the target."""
    n = np.zeros(2)
    for step in range(1, options.continuation_steps + 1):
        scale = step / options.continuation_steps
        ramped = drive.model_copy(update={"p_left": drive.p_left * scale, "p_right": drive.p_right * scale})
        equations = _PhotonNumberEquations(params, ramped, options.sign_convention)
        start = equations.undressed() if step == 1 else n
        n, _ = _newton(equations, start, options.tol)
    return n


def solve_steady_state(
    params: SystemParams,
    drive: DriveConfig,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    *,
    options: Optional[SolverOptions] = None,
) -> SteadyState:
    """
    Solve the coupled photon-number equations.

    Args:
        params: Device constants
        drive: Pump and probe settings (the probe does not enter)
        tol: Relative residual target, defaults to 1e-12
        max_iter: Fixed-point iteration budget, defaults to 10 000
        options: Remaining solver knobs

    Returns:
        The fixed point connected to the zero-power solution

    Raises:
        ConvergenceError: when neither the iteration nor the branch scan
            reaches the tolerance
    """
    options = options or SolverOptions()
    update = {key: value for key, value in (("tol", tol), ("max_iter", max_iter)) if value is not None}
    if update:
        options = SolverOptions(**{**options.model_dump(), **update})

    equations = _PhotonNumberEquations(params, drive, options.sign_convention)
    if not equations.driven:
        return _build_state(equations, np.zeros(2), 0.0, 1)

    if not options.self_consistent:
        n = equations.undressed()
        return SteadyState(
            n_1=float(n[0]), n_2=float(n[1]), q_s=0.0,
            delta_1_eff=drive.delta_1, delta_2_eff=drive.delta_2,
            residual=0.0, branch_count=1,
        )

    n, residual = _fixed_point(equations, options)
    if residual > options.tol:
        n, residual = _newton(equations, n, options.tol)

    scanned = _scan(equations, options.scan_resolution, options.tol)
    roots = [item for item in scanned if item[1] <= options.tol]
    if residual <= options.tol:
        roots.append((n, residual))
    roots = _distinct(roots, equations.normaliser())

    if not roots:
        best = min([(n, residual)] + scanned, key=lambda item: item[1])[1]
        raise ConvergenceError(
            f"Steady state not found after {options.max_iter} iterations and a "
            f"{options.scan_resolution}x{options.scan_resolution} branch scan",
            best_residual=best,
        )

    if len(roots) > 1:
        logger.info(f"Bistable operating point: {len(roots)} branches, following the zero-power branch")
        tracked = _continue_from_zero(params, drive, options)
        normaliser = equations.normaliser()
        n, residual = min(roots, key=lambda item: float(np.max(np.abs(item[0] - tracked) / normaliser)))
    elif residual > options.tol:
        n, residual = roots[0]

    return _build_state(equations, n, residual, len(roots))
