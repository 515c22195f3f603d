"""
Scenario runners: spectra, power sweeps of the group delay and the figure catalogue.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import yaml
from opentelemetry import trace
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import optimize

from .model import (
    CONFIG_DIR,
    ConvergenceError,
    DegenerateAmplitudeError,
    DomainModel,
    DriveConfig,
    InvalidParameterError,
    ProbeGrid,
    SystemParams,
    delta_probe_to_delta,
    drive_amplitude,
    paper_default_params,
    snapshot,
)
from .response import (
    Channel,
    bare_transmission,
    effective_linewidth,
    group_delay,
    principal_phase,
    reflection,
)
from .steady_state import SolverOptions, SteadyState, solve_steady_state

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

FIGURES_FILE = "figures.yaml"
SPECTRUM_COLUMNS = ("abs_t", "abs_t_sq", "phase_t", "t_re", "t_im", "r_re", "r_im")


class GridOptions(BaseModel):
    """Default probe grid: a broad scan across the cavity plus a dense window at resonance"""

    model_config = ConfigDict(frozen=True)

    span_kappa_1: float = Field(3.0, gt=0.0, description="Half width of the broad grid in units of kappa_1")
    points: int = Field(4001, ge=2, description="Points of the broad grid")
    window_linewidths: float = Field(10.0, gt=0.0, description="Half width of the dense window in linewidths")
    window_points: int = Field(2001, ge=0, description="Points of the dense window, 0 disables it")


class SweepResult(DomainModel):
    """Columns of one swept computation, aligned with axis_values"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = Field("", description="Panel or run name, used for file names")
    axis_name: str
    axis_values: np.ndarray
    columns: Dict[str, np.ndarray]
    config_snapshot: Dict[str, Any] = Field(default_factory=dict)
    solver_diagnostics: Dict[str, List[Any]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _aligned(self) -> "SweepResult":
        size = len(self.axis_values)
        if size == 0:
            raise InvalidParameterError("a sweep must contain at least one point")
        for key, column in self.columns.items():
            if len(column) != size:
                raise InvalidParameterError(f"column {key!r} has {len(column)} entries, axis has {size}")
        for array in (self.axis_values, *self.columns.values()):
            array.setflags(write=False)
        return self


class WindowMetrics(DomainModel):
    """Transparency window measured on |t|^2 - |t_bare|^2"""

    model_config = ConfigDict(frozen=True)

    center: float = Field(..., description="Probe-cavity detuning of the window maximum, rad/s")
    fwhm: float = Field(..., description="Full width at half maximum, rad/s (nan when no window)")
    height: float = Field(..., description="Peak excess transmission")


def _frozen(values: Sequence[float], dtype: Any = float) -> np.ndarray:
    return np.array(values, dtype=dtype)


def _spectrum_columns(transmitted: np.ndarray, reflected: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
    """Spectrum columns in SPECTRUM_COLUMNS order; the r columns need the reflected amplitude."""
    series = {
        "abs_t": np.abs(transmitted),
        "abs_t_sq": np.abs(transmitted) ** 2,
        "phase_t": principal_phase(transmitted),
        "t_re": transmitted.real.copy(),
        "t_im": transmitted.imag.copy(),
    }
    if reflected is not None:
        series.update(r_re=reflected.real.copy(), r_im=reflected.imag.copy())
    return {key: series[key] for key in SPECTRUM_COLUMNS if key in series}


def _map(function: Callable, items: Sequence[Any], workers: int) -> List[Any]:
    """Ordered map, on a thread pool when workers > 1."""
    if workers <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(function, items))


def default_probe_grid(params: SystemParams, linewidth: float, options: Optional[GridOptions] = None) -> ProbeGrid:
    """
    Broad grid over +-span_kappa_1 * kappa_1 merged with a dense window of
    +-window_linewidths * linewidth around Delta_p = 0.
    """
    options = options or GridOptions()
    span = options.span_kappa_1 * params.kappa_1
    grid = ProbeGrid.linear(-span, span, options.points)
    if options.window_points > 0 and linewidth > 0.0:
        half_width = options.window_linewidths * linewidth
        grid = ProbeGrid.merged(grid, ProbeGrid.linear(-half_width, half_width, options.window_points))
    return grid


def log_power_grid(p_min: float, p_max: float, points_per_decade: int = 200) -> np.ndarray:
    """Logarithmic power axis from p_min to p_max inclusive, W."""
    if not (p_min > 0.0 and p_max > p_min and math.isfinite(p_max)):
        raise InvalidParameterError(f"need 0 < p_min < p_max, got p_min={p_min!r}, p_max={p_max!r}")
    if points_per_decade < 1:
        raise InvalidParameterError(f"points_per_decade must be at least 1, got {points_per_decade!r}")
    decades = math.log10(p_max / p_min)
    num = max(int(round(decades * points_per_decade)) + 1, 2)
    return np.logspace(math.log10(p_min), math.log10(p_max), num)


def _grid_snapshot(grid: ProbeGrid) -> List[tuple]:
    values = grid.as_array()
    return [("grid.points", len(values)), ("grid.min", float(values[0])), ("grid.max", float(values[-1]))]


def _options_snapshot(options: SolverOptions) -> List[tuple]:
    return [(f"solver.{key}", value) for key, value in options.model_dump().items()]


def _steady_diagnostics(steady: SteadyState) -> Dict[str, List[Any]]:
    return {
        "residual": [steady.residual],
        "branch_count": [steady.branch_count],
        "n_1": [steady.n_1],
        "n_2": [steady.n_2],
        "q_s": [steady.q_s],
    }


def spectrum_sweep(
    params: SystemParams,
    drive: DriveConfig,
    grid: Optional[ProbeGrid] = None,
    *,
    options: Optional[SolverOptions] = None,
    grid_options: Optional[GridOptions] = None,
    workers: int = 1,
    name: str = "spectrum",
) -> SweepResult:
    """
    One steady-state solve, then the probe response over Delta_p.

    Raises:
        ConvergenceError: the operating point could not be solved
    """
    options = options or SolverOptions()
    with tracer.start_as_current_span("spectrum_sweep") as span:
        steady = solve_steady_state(params, drive, options=options)
        if grid is None:
            grid = default_probe_grid(params, effective_linewidth(params, steady).gamma_eff, grid_options)
        span.set_attribute("spectrum.points", len(grid))

        detunings = grid.as_array()
        chunks = np.array_split(detunings, max(1, min(workers, len(detunings))))
        reflected = np.concatenate(_map(
            lambda chunk: np.atleast_1d(reflection(params, drive, steady, delta_probe_to_delta(chunk, drive.delta_1))),
            chunks, workers,
        ))
        transmitted = 1.0 - reflected
        logger.info(f"Spectrum '{name}': {len(detunings)} points, n_1={steady.n_1:.4g}, n_2={steady.n_2:.4g}")

        return SweepResult(
            name=name,
            axis_name="delta_p",
            axis_values=_frozen(detunings),
            columns=_spectrum_columns(transmitted, reflected),
            config_snapshot=snapshot(params, drive, _grid_snapshot(grid) + _options_snapshot(options)),
            solver_diagnostics=_steady_diagnostics(steady),
        )


def power_sweep_delay(
    params: SystemParams,
    drive_template: DriveConfig,
    powers: Sequence[float],
    which: Channel = "transmission",
    *,
    delta_p: float = 0.0,
    options: Optional[SolverOptions] = None,
    workers: int = 1,
    name: str = "delay_sweep",
) -> SweepResult:
    """
    Group delay at Delta_p against the left pump power, re-solving the
    operating point at every power. Failed points become nan and the sweep
    continues.
    """
    if which not in ("transmission", "reflection"):
        raise InvalidParameterError(f"which must be 'transmission' or 'reflection', got {which!r}")
    powers = np.asarray(powers, dtype=float)
    if powers.ndim != 1 or len(powers) == 0:
        raise InvalidParameterError("powers must be a non-empty list")
    if not np.all(np.isfinite(powers)) or np.any(powers < 0.0):
        raise InvalidParameterError("powers must be finite and non-negative")
    options = options or SolverOptions()
    column = "tau_g_t" if which == "transmission" else "tau_g_r"

    def evaluate(power: float) -> Dict[str, Any]:
        drive = drive_template.model_copy(update={"p_left": float(power)})
        try:
            steady = solve_steady_state(params, drive, options=options)
        except ConvergenceError as e:
            logger.warning(f"P_L={power:.4g} W skipped: {e}")
            return {column: math.nan, "n_1": math.nan, "n_2": math.nan, "gamma_eff": math.nan,
                    "residual": e.best_residual, "branch_count": 0, "status": str(e)}
        point = {
            "n_1": steady.n_1,
            "n_2": steady.n_2,
            "gamma_eff": effective_linewidth(params, steady).gamma_eff,
            "residual": steady.residual,
            "branch_count": steady.branch_count,
            "status": "ok",
        }
        try:
            point[column] = group_delay(params, drive, steady, delta_probe_to_delta(delta_p, drive.delta_1), which)
        except DegenerateAmplitudeError as e:
            logger.warning(f"P_L={power:.4g} W: {e}")
            point[column] = math.nan
            point["status"] = str(e)
        return point

    with tracer.start_as_current_span("power_sweep_delay") as span:
        span.set_attribute("sweep.points", len(powers))
        span.set_attribute("sweep.which", which)
        points = _map(evaluate, list(powers), workers)

    failed = sum(1 for point in points if point["status"] != "ok")
    if failed:
        logger.warning(f"Delay sweep '{name}': {failed} of {len(points)} points failed")
    logger.info(f"Delay sweep '{name}': {len(points)} powers, {which}")

    return SweepResult(
        name=name,
        axis_name="p_left_w",
        axis_values=_frozen(powers),
        columns={key: _frozen([point[key] for point in points]) for key in (column, "n_1", "n_2", "gamma_eff")},
        config_snapshot=snapshot(
            params,
            drive_template,
            [("sweep.which", which), ("sweep.delta_p", float(delta_p))] + _options_snapshot(options),
        ),
        solver_diagnostics={key: [point[key] for point in points] for key in ("residual", "branch_count", "status")},
    )


def _single_cavity_photon_number(params: SystemParams, drive: DriveConfig) -> float:
    """Lowest root of n = kappa_e1 E^2 / (kappa_1^2 + (Delta_1 - 2 g_1^2 n / omega_m)^2)."""
    omega_l = params.omega_1 - drive.delta_1
    source = params.kappa_e1 * drive_amplitude(drive.p_left, params.kappa_1, omega_l) ** 2
    if source == 0.0:
        return 0.0
    shift = 2.0 * params.g_1**2 / params.omega_m
    n_max = source / params.kappa_1**2

    def excess(n: float) -> float:
        return n - source / (params.kappa_1**2 + (drive.delta_1 - shift * n) ** 2)

    samples = np.linspace(0.0, n_max, 4097)
    values = np.array([excess(n) for n in samples])
    crossing = int(np.argmax(values >= 0.0))
    if values[crossing] == 0.0:
        return float(samples[crossing])
    return optimize.brentq(excess, samples[crossing - 1], samples[crossing], xtol=1e-15 * n_max, rtol=1e-15)


def single_mode_oracle_spectrum(
    params: SystemParams,
    drive: DriveConfig,
    grid: Optional[ProbeGrid] = None,
) -> SweepResult:
    """
    Closed-form single-cavity transmission, computed without the two-mode code path.

    t = 1 - kappa_e chi_a [1 + i G^2 chi_a chi_m / (1 - i G^2 chi_m (chi_a - chi_a_bar))]
    with chi_a = 1/(kappa + i(D - delta)), chi_a_bar = 1/(kappa - i(D + delta)),
    chi_m = omega_m / (omega_m^2 - delta^2 - i delta gamma_m), G^2 = g_1^2 n_1.
    """
    if drive.p_right != 0.0:
        raise InvalidParameterError("the single-mode reference needs p_right = 0")
    n_1 = _single_cavity_photon_number(params, drive)
    detuning = drive.delta_1 - 2.0 * params.g_1**2 * n_1 / params.omega_m
    coupling = params.g_1**2 * n_1
    if grid is None:
        cooperativity = coupling / (params.kappa_1 * params.gamma_m)
        grid = default_probe_grid(params, params.gamma_m * (1.0 + cooperativity))

    dp = grid.as_array()
    delta = delta_probe_to_delta(dp, drive.delta_1)
    chi_a = 1.0 / (params.kappa_1 + 1j * (detuning - delta))
    chi_a_bar = 1.0 / (params.kappa_1 - 1j * (detuning + delta))
    chi_m = params.omega_m / ((params.omega_m - delta) * (params.omega_m + delta) - 1j * delta * params.gamma_m)
    transmitted = 1.0 - params.kappa_e1 * chi_a * (
        1.0 + 1j * coupling * chi_a * chi_m / (1.0 - 1j * coupling * chi_m * (chi_a - chi_a_bar))
    )

    return SweepResult(
        name="single_mode_oracle",
        axis_name="delta_p",
        axis_values=_frozen(dp),
        columns=_spectrum_columns(transmitted),
        config_snapshot=snapshot(params, drive, _grid_snapshot(grid)),
        solver_diagnostics={"n_1": [n_1]},
    )


def transparency_window(
    params: SystemParams,
    drive: DriveConfig,
    steady: Optional[SteadyState] = None,
    *,
    linewidths: float = 10.0,
    points: int = 8001,
    options: Optional[SolverOptions] = None,
) -> WindowMetrics:
    """
    Center, FWHM and height of the window in |t|^2 - |t_bare|^2, sampled over
    +-linewidths * gamma_total around Delta_p = 0.
    """
    if steady is None:
        steady = solve_steady_state(params, drive, options=options)
    half_width = linewidths * effective_linewidth(params, steady).gamma_total
    dp = np.linspace(-half_width, half_width, points)
    delta = delta_probe_to_delta(dp, drive.delta_1)
    excess = np.abs(1.0 - reflection(params, drive, steady, delta)) ** 2 - np.abs(bare_transmission(params, steady, delta)) ** 2

    peak = int(np.argmax(excess))
    height = float(excess[peak])
    if height <= 0.0:
        logger.warning("No transparency window above the bare cavity response")
        return WindowMetrics(center=float(dp[peak]), fwhm=math.nan, height=height)

    half = 0.5 * height
    below = np.nonzero(excess < half)[0]
    left, right = below[below < peak], below[below > peak]
    if len(left) == 0 or len(right) == 0:
        logger.warning("Transparency window wider than the sampled range")
        return WindowMetrics(center=float(dp[peak]), fwhm=math.nan, height=height)

    def crossing(outside: int, inside: int) -> float:
        x0, x1 = dp[outside], dp[inside]
        y0, y1 = excess[outside], excess[inside]
        return float(x0 + (half - y0) * (x1 - x0) / (y1 - y0))

    fwhm = crossing(right[0], right[0] - 1) - crossing(left[-1], left[-1] + 1)
    return WindowMetrics(center=float(dp[peak]), fwhm=fwhm, height=height)


def _patch_params(params: SystemParams, patch: Mapping[str, Any]) -> SystemParams:
    """Apply SystemParams field values (rad/s) and kappa_eK_ratio shortcuts."""
    values = params.model_dump()
    for key, value in patch.items():
        if key in ("kappa_e1_ratio", "kappa_e2_ratio"):
            index = key[len("kappa_e")]
            values[f"kappa_e{index}"] = float(value) * values[f"kappa_{index}"]
        elif key in SystemParams.model_fields:
            values[key] = float(value)
        else:
            raise InvalidParameterError(f"unknown device parameter override {key!r}")
    return SystemParams(**values)


OVERRIDE_KEYS = frozenset(DriveConfig.model_fields) | {"powers", "grid", "params"}


class ExperimentRunner:
    """
    Runs the figure catalogue in config/figures.yaml and generic sweeps with
    one shared set of solver options and worker count.
    """

    def __init__(
        self,
        config_path: Union[str, Path] = CONFIG_DIR,
        workers: int = 1,
        options: Optional[SolverOptions] = None,
        grid_options: Optional[GridOptions] = None,
    ):
        self.config_path = Path(config_path)
        self.workers = max(1, int(workers))
        self.options = options or SolverOptions()
        self.grid_options = grid_options or GridOptions()
        self.figures = self._load_figures()
        logger.debug(f"Experiment runner with figures {sorted(self.figures)} and {self.workers} worker(s)")

    def _load_figures(self) -> Dict[str, Any]:
        figures_file = self.config_path / FIGURES_FILE
        try:
            with open(figures_file, "r") as file:
                return yaml.safe_load(file) or {}
        except FileNotFoundError:
            logger.error(f"Figure catalogue not found: {figures_file}")
            raise

    @property
    def figure_ids(self) -> List[str]:
        return sorted(self.figures)

    def spectrum(self, params: SystemParams, drive: DriveConfig, grid: Optional[ProbeGrid] = None,
                 name: str = "spectrum") -> SweepResult:
        return spectrum_sweep(params, drive, grid, options=self.options, grid_options=self.grid_options,
                              workers=self.workers, name=name)

    def delay_sweep(self, params: SystemParams, drive_template: DriveConfig, powers: Sequence[float],
                    which: Channel = "transmission", delta_p: float = 0.0, name: str = "delay_sweep") -> SweepResult:
        return power_sweep_delay(params, drive_template, powers, which, delta_p=delta_p, options=self.options,
                                 workers=self.workers, name=name)

    def run_figure(
        self,
        figure_id: str,
        params: Optional[SystemParams] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> List[SweepResult]:
        """
        Run every panel of a catalogued figure.

        Args:
            figure_id: One of figure_ids (fig2, fig3, fig4, fig5)
            params: Device constants, defaults to the packaged profile
            overrides: DriveConfig fields applied to every panel, plus
                "powers" (power axis), "grid" (probe grid) and "params"
                (device parameter patch)

        Returns:
            One SweepResult per panel, in catalogue order
        """
        if figure_id not in self.figures:
            raise InvalidParameterError(f"unknown figure {figure_id!r}, expected one of {self.figure_ids}")
        overrides = dict(overrides or {})
        unknown = sorted(set(overrides) - OVERRIDE_KEYS)
        if unknown:
            raise InvalidParameterError(f"unknown override keys {unknown}, allowed {sorted(OVERRIDE_KEYS)}")

        params = params or paper_default_params()
        if "params" in overrides:
            params = _patch_params(params, overrides.pop("params"))
        grid = overrides.pop("grid", None)
        if grid is not None and not isinstance(grid, ProbeGrid):
            grid = ProbeGrid(detunings=tuple(float(value) for value in grid))
        powers = overrides.pop("powers", None)

        figure = self.figures[figure_id]
        kind = figure.get("kind", "spectrum")
        if kind == "delay" and powers is None:
            axis = figure.get("powers", {})
            powers = log_power_grid(axis.get("p_min_w", 1e-9), axis.get("p_max_w", 2e-5),
                                    axis.get("points_per_decade", 200))

        results = []
        with tracer.start_as_current_span("run_figure") as span:
            span.set_attribute("figure.id", figure_id)
            for panel in figure.get("panels", []):
                panel_params = _patch_params(params, panel["params"]) if panel.get("params") else params
                drive = DriveConfig(**{
                    "p_left": panel.get("p_left_w", 0.0),
                    "p_right": panel.get("p_right_w", 0.0),
                    "delta_1": panel.get("delta_1_omega_m", 1.0) * panel_params.omega_m,
                    "delta_2": panel.get("delta_2_omega_m", 1.0) * panel_params.omega_m,
                    **overrides,
                })
                logger.info(f"Running panel {panel['name']} of {figure_id}")
                if kind == "delay":
                    results.append(self.delay_sweep(panel_params, drive, powers, panel.get("which", "transmission"),
                                                    name=panel["name"]))
                elif kind == "spectrum":
                    results.append(self.spectrum(panel_params, drive, grid, name=panel["name"]))
                else:
                    raise InvalidParameterError(f"figure {figure_id!r} has unknown kind {kind!r}")
        return results


def create_experiment_runner(config_path: Optional[Union[str, Path]] = None, workers: int = 1,
                             options: Optional[SolverOptions] = None,
                             grid_options: Optional[GridOptions] = None) -> ExperimentRunner:
    """Create an ExperimentRunner over the packaged (or given) configuration directory"""
    return ExperimentRunner(config_path=config_path or CONFIG_DIR, workers=workers, options=options,
                            grid_options=grid_options)


def run_figure(figure_id: str, params: Optional[SystemParams] = None,
               overrides: Optional[Mapping[str, Any]] = None) -> List[SweepResult]:
    """Run a catalogued figure with the packaged configuration."""
    return create_experiment_runner().run_figure(figure_id, params, overrides)
