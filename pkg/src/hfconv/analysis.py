"""Post-hoc convergence analytics: error tails, rate fits, Łojasiewicz probes,
shift-scaling sweeps and algorithm comparisons."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from . import hamiltonian as ham
from .errors import HFError, InsufficientDataError, NotConvergedError
from .matops import frobenius_norm
from .solvers import (
    FixedStep,
    GradientDescent,
    RunResult,
    SolverConfig,
    Status,
    estimate_alpha,
    initial_guess,
    run,
    run_level_shifting,
    run_roothaan,
)

EPS = np.finfo(float).eps
FIT_FLOOR = 10 * EPS
MIN_FIT_POINTS = 8
DEGENERATE_R2 = 0.99


def _matrix(D):
    return np.asarray(getattr(D, "matrix", D), dtype=float)


def tail_error_series(stored_iterates, stride: int = 1) -> np.ndarray:
    """``e_k = sum_{l >= k} ||D_{l+stride} - D_l||`` truncated at the last iterate.

    The truncation makes every value a lower bound on the infinite tail sum.
    Runs with at most ``stride`` iterates give an empty series.
    """
    if stored_iterates is None:
        raise ValueError("tail_error_series needs stored iterates (run with record_matrices=True)")
    mats = [_matrix(D) for D in stored_iterates]
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if len(mats) <= stride:
        # too short for a single difference: nothing left to converge
        return np.zeros(0)
    steps = [frobenius_norm(mats[l + stride] - mats[l]) for l in range(len(mats) - stride)]
    tail = np.empty(len(steps))
    acc = 0.0
    for k in range(len(steps) - 1, -1, -1):
        acc = steps[k] + acc
        tail[k] = acc
    return tail


def _linear_fit(x, y):
    """Least-squares line; returns (slope, intercept, r2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return slope, intercept, r2


def _fit_window(series, floor, window_fraction, min_points):
    e = np.asarray(series, dtype=float)
    ks = np.arange(len(e))
    keep = np.isfinite(e) & (e > floor)
    ks, e = ks[keep], e[keep]
    if len(e) < min_points:
        raise InsufficientDataError(
            f"insufficient decay data: {len(e)} points above {floor:.1e}, need {min_points}"
        )
    size = max(min_points, int(math.ceil(window_fraction * len(e))))
    return ks[-size:], e[-size:]


def fit_geometric_rate(
    series,
    window_fraction: float = 0.5,
    floor: float = FIT_FLOOR,
    min_points: int = MIN_FIT_POINTS,
):
    """Fit ``e_k ~ c (1 - ν)^k`` by least squares on ``log e_k`` vs ``k``.

    Uses the final ``window_fraction`` of the points above ``floor`` (at
    least ``min_points``). Returns ``(nu, r2)`` with ``nu = 1 - exp(slope)``.
    """
    ks, e = _fit_window(series, floor, window_fraction, min_points)
    slope, _, r2 = _linear_fit(ks, np.log(e))
    return -math.expm1(slope), r2


def fit_power_law(series, ks=None, window_fraction=0.5, floor=FIT_FLOOR, min_points=MIN_FIT_POINTS):
    """Fit ``e_k ~ c k^p`` on a log-log scale; returns ``(p, r2)``.

    ``ks`` defaults to ``1, 2, ...`` so a series starting at iteration 0 is
    shifted by one.
    """
    e = np.asarray(series, dtype=float)
    ks = np.arange(1, len(e) + 1, dtype=float) if ks is None else np.asarray(ks, dtype=float)
    if np.any(ks <= 0):
        raise ValueError("power-law abscissae must be positive")
    idx, vals = _fit_window(e, floor, window_fraction, min_points)
    slope, _, r2 = _linear_fit(np.log(ks[idx]), np.log(vals))
    return slope, r2


class LojasiewiczFit(NamedTuple):
    theta: float
    kappa: float
    slope: float
    r2: float
    n_points: int
    in_range: bool


def lojasiewicz_fit(energy_gaps, grad_norms, band=(1e2 * EPS, 1e-2), min_points=MIN_FIT_POINTS):
    """Regress ``log ||∇E||`` on ``log |E - E_inf|`` inside ``band``.

    With fitted ``log ||∇E|| = s log|E - E_inf| + c`` this reports
    ``θ = 1 - s`` and ``κ = exp(-c)`` so that ``|E - E_inf|^(1-θ) = κ ||∇E||``
    holds on the regression line. ``in_range`` is False when θ falls outside
    ``(0, 1/2]`` (beyond a 1e-9 allowance).
    """
    dE = np.abs(np.asarray(energy_gaps, dtype=float))
    g = np.asarray(grad_norms, dtype=float)
    lo, hi = band
    mask = np.isfinite(dE) & np.isfinite(g) & (dE > lo) & (dE < hi) & (g > 0)
    if int(mask.sum()) < min_points:
        raise InsufficientDataError(
            f"insufficient points in the fitting band ({int(mask.sum())} < {min_points})"
        )
    slope, intercept, r2 = _linear_fit(np.log(dE[mask]), np.log(g[mask]))
    theta = 1.0 - slope
    return LojasiewiczFit(
        theta=theta,
        kappa=math.exp(-intercept),
        slope=slope,
        r2=r2,
        n_points=int(mask.sum()),
        in_range=bool(0.0 < theta <= 0.5 + 1e-9),
    )


def lojasiewicz_probe(trace, stored_iterates=None, E_inf=None, system=None, band=(1e2 * EPS, 1e-2)):
    """Empirical Łojasiewicz exponent and constant of a run.

    ``E_inf`` defaults to the lowest energy in the trace. When both
    ``stored_iterates`` and ``system`` are given and ``E_inf`` is not, the
    energy gaps are evaluated as ``E(D_k) - E(D_final)`` from matrix
    differences, which stays accurate far below the rounding level of the
    absolute energies.
    """
    grads = np.array([r.grad_norm for r in trace], dtype=float)
    if E_inf is None and stored_iterates is not None and system is not None:
        final = _matrix(stored_iterates[-1])
        gaps = np.array(
            [-ham.energy_difference(system, _matrix(D), final) for D in stored_iterates]
        )
        grads = grads[: len(gaps)]
    else:
        energies = np.array([r.energy for r in trace], dtype=float)
        ref = float(np.min(energies)) if E_inf is None else float(E_inf)
        gaps = energies - ref
    return lojasiewicz_fit(gaps, grads, band=band)


@dataclass
class ConvergenceReport:
    nu: Optional[float]
    nu_r2: Optional[float]
    theta: Optional[float] = None
    kappa: Optional[float] = None
    degenerate_flag: bool = False
    theta_in_range: Optional[bool] = None
    power_exponent: Optional[float] = None
    tail: List[float] = field(default_factory=list)


def classify_decay(series, window_fraction=0.5):
    """Geometric and power-law fits of one decaying series.

    The series is flagged degenerate (sublinear) when the geometric fit has
    ``r2 < 0.99`` or the log-log fit explains the data better.
    Returns ``(nu, r2, power_exponent, degenerate_flag)``.
    """
    nu, r2 = fit_geometric_rate(series, window_fraction)
    p, r2_pow = fit_power_law(series, window_fraction=window_fraction)
    degenerate = r2 < DEGENERATE_R2 or r2_pow > r2
    return nu, r2, p, degenerate


def convergence_report(result: RunResult, system=None, use_tail: bool = False) -> ConvergenceReport:
    """Summarize a run: rate fit (on grad_norm, or on ``e_k`` when
    ``use_tail``), Łojasiewicz probe, and degeneracy flag."""
    stride = 1 if result.algorithm == GradientDescent.name else 2
    tail = []
    if result.stored_iterates is not None and len(result.stored_iterates) > stride:
        tail = list(tail_error_series(result.stored_iterates, stride))
    series = tail if use_tail else result.trace.column("grad_norm")
    try:
        nu, r2, p, degenerate = classify_decay(series)
    except InsufficientDataError:
        nu = r2 = p = None
        degenerate = False
    report = ConvergenceReport(nu=nu, nu_r2=r2, degenerate_flag=degenerate, power_exponent=p, tail=tail)
    try:
        fit = lojasiewicz_probe(result.trace, result.stored_iterates, system=system)
        report.theta, report.kappa, report.theta_in_range = fit.theta, fit.kappa, fit.in_range
    except InsufficientDataError:
        pass
    return report


# --- sweeps ----------------------------------------------------------------


@dataclass
class ShiftRow:
    b: float
    status: str
    iterations: int
    energy: float
    nu: Optional[float]
    nu_r2: Optional[float]


class ShiftStudyError(HFError, RuntimeError):
    def __init__(self, message, rows):
        self.rows = rows
        super().__init__(message)


@dataclass
class ShiftStudy:
    rows: List[ShiftRow]
    slope: float
    slope_r2: float
    last_ratio: float


def _shift_job(args):
    system, D0, config, b = args
    result = run_level_shifting(system, D0, config, b)
    nu = r2 = None
    if result.status is Status.CONVERGED:
        try:
            nu, r2 = fit_geometric_rate(result.trace.column("grad_norm"))
        except InsufficientDataError:
            pass
    return ShiftRow(float(b), result.status.value, result.iterations, result.energy, nu, r2)


def shift_sweep(system, D0, b_grid, config: Optional[SolverConfig] = None, jobs: int = 1) -> List[ShiftRow]:
    """Run Level-Shifting once per ``b``; rows come back in grid order."""
    config = config or SolverConfig()
    tasks = [(system, D0, config, float(b)) for b in b_grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_shift_job, tasks))
    return [_shift_job(t) for t in tasks]


def shift_scaling_study(system, D0, b_grid, config: Optional[SolverConfig] = None, jobs: int = 1) -> ShiftStudy:
    """Fitted rate ``ν(b)`` of Level-Shifting and the log-log slope of ``ν`` vs ``b``.

    The slope uses the largest-``b`` half of the grid; ``last_ratio`` is
    ``ν(b_max) / ν(b_prev)`` for the two largest shifts.
    """
    grid = sorted(float(b) for b in b_grid)
    if len(grid) < 5:
        raise ValueError("b_grid needs at least 5 points")
    if grid[0] <= 0 or math.log10(grid[-1] / grid[0]) < 1.5 - 1e-12:
        raise ValueError("b_grid must be positive and span at least 1.5 decades")
    return fit_shift_scaling(shift_sweep(system, D0, grid, config, jobs))


def fit_shift_scaling(rows: Sequence[ShiftRow]) -> ShiftStudy:
    """Log-log slope of ``ν`` vs ``b`` over the largest-``b`` half of ``rows``."""
    rows = sorted(rows, key=lambda r: r.b)
    failed = [r.b for r in rows if r.status != Status.CONVERGED.value]
    if failed:
        raise ShiftStudyError(f"level-shifting did not converge for b = {failed}", rows)
    if any(r.nu is None for r in rows):
        missing = [r.b for r in rows if r.nu is None]
        raise InsufficientDataError(f"insufficient decay data for b = {missing}")
    if len(rows) < 2:
        raise InsufficientDataError("need at least two shifts for a slope")
    upper = rows[len(rows) // 2:] if len(rows) >= 4 else rows
    slope, _, r2 = _linear_fit(np.log([r.b for r in upper]), np.log([r.nu for r in upper]))
    return ShiftStudy(rows=rows, slope=slope, slope_r2=r2, last_ratio=rows[-1].nu / rows[-2].nu)


@dataclass
class ComparisonRow:
    name: str
    status: str
    iterations: Optional[int]
    iterations_to_tol: Optional[int]
    energy: Optional[float]
    nu: Optional[float]
    nu_r2: Optional[float]
    message: str = ""


def compare_algorithms(system, D0, configs, tol: float = 1e-8) -> List[ComparisonRow]:
    """Run each named configuration from the same start and tabulate the outcome.

    ``configs`` maps names to :class:`SolverConfig` (or is a sequence of
    ``(name, config)`` pairs). Failures become rows with status ``"error"``.
    """
    items = configs.items() if hasattr(configs, "items") else configs
    rows = []
    for name, config in items:
        try:
            result = run(system, D0, config)
        except (HFError, ValueError) as exc:
            rows.append(ComparisonRow(name, "error", None, None, None, None, None, str(exc)))
            continue
        try:
            nu, r2 = fit_geometric_rate(result.trace.column("grad_norm"))
        except InsufficientDataError:
            nu = r2 = None
        rows.append(
            ComparisonRow(
                name,
                result.status.value,
                result.iterations,
                result.trace.first_below(tol),
                result.energy,
                nu,
                r2,
                result.message,
            )
        )
    return rows


def gradient_fixed_alpha_config(system, D0, **kwargs) -> SolverConfig:
    """Gradient descent with fixed step ``1/α̂`` (``α̂`` from :func:`estimate_alpha`)."""
    alpha = estimate_alpha(system, D0)
    return SolverConfig(GradientDescent(FixedStep(1.0 / alpha)), **kwargs)


def planted_geometric(nu: float, n: int, scale: float = 1.0) -> np.ndarray:
    """``scale * (1 - nu)^k`` for ``k = 0..n-1``."""
    return scale * (1.0 - nu) ** np.arange(n)


def find_oscillating_seed(
    n_basis: int = 6,
    n_electrons: int = 3,
    convention="spinless",
    interaction_scale: float = 1.0,
    seeds: Sequence[int] = range(200),
    max_iter: int = 2000,
):
    """Seed search for a random system on which Roothaan (core guess) oscillates.

    Returns ``(seed, system, result)`` for the first hit.
    """
    for seed in seeds:
        system = ham.random_system(seed, n_basis, n_electrons, convention, interaction_scale)
        try:
            D0 = initial_guess(system)
        except HFError:
            continue
        result = run_roothaan(system, D0, SolverConfig(max_iter=max_iter))
        if result.status is Status.OSCILLATING:
            return seed, system, result
    raise NotConvergedError("no oscillating system found in the seed range")


__all__ = [
    "tail_error_series",
    "fit_geometric_rate",
    "fit_power_law",
    "classify_decay",
    "lojasiewicz_fit",
    "lojasiewicz_probe",
    "LojasiewiczFit",
    "ConvergenceReport",
    "convergence_report",
    "ShiftRow",
    "ShiftStudy",
    "ShiftStudyError",
    "shift_sweep",
    "shift_scaling_study",
    "fit_shift_scaling",
    "ComparisonRow",
    "compare_algorithms",
    "gradient_fixed_alpha_config",
    "planted_geometric",
    "find_oscillating_seed",
]
