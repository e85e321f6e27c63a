"""Gradient descent on the projector manifold, Roothaan and Level-Shifting.

All three solvers share the same stopping rule (commutator residual
``||[D, F(D)]|| <= tol_grad``) and record one :class:`IterationRecord` per
iterate so their traces can be compared directly.
"""
from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field, fields
from typing import List, Optional, Union

import numpy as np

from . import hamiltonian as ham
from .errors import HFError, NotConvergedError, WellPosednessError
from .manifold import (
    DensityMatrix,
    conjugate,
    aufbau,
    gap,
    geodesic_displacement,
    geodesic_step,
    gradient_norm,
    random_kick,
    settle,
)
from .matops import commutator, expm_antisym, frobenius_norm, idempotency_defect, mcweeny_purify

log = logging.getLogger(__name__)

MAX_HALVINGS = 60
PURIFY_EVERY = 100
ROUNDING_SLACK = 16 * np.finfo(float).eps


# --- configuration -------------------------------------------------------


@dataclass(frozen=True)
class FixedStep:
    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"step t must be > 0, got {self.t}")


@dataclass(frozen=True)
class AlphaFormula:
    """Fixed step ``t = 1/α`` with ``α`` from :func:`estimate_alpha`."""


@dataclass(frozen=True)
class Backtracking:
    t_init: Optional[float] = None
    shrink: float = 0.5
    armijo: float = 0.5

    def __post_init__(self):
        if self.t_init is not None and not self.t_init > 0:
            raise ValueError("t_init must be > 0")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not 0 < self.armijo < 1:
            raise ValueError("armijo constant must lie in (0, 1)")


StepPolicy = Union[FixedStep, AlphaFormula, Backtracking]


@dataclass(frozen=True)
class GradientDescent:
    step: StepPolicy = Backtracking()
    name = "gradient"


@dataclass(frozen=True)
class Roothaan:
    name = "roothaan"


@dataclass(frozen=True)
class LevelShifting:
    b: float
    name = "level-shifting"

    def __post_init__(self):
        if self.b < 0:
            raise ValueError(f"shift b must be >= 0, got {self.b}")


Algorithm = Union[GradientDescent, Roothaan, LevelShifting]


@dataclass(frozen=True)
class SolverConfig:
    algorithm: Algorithm = Roothaan()
    tol_grad: float = 1e-8
    tol_dd: float = 1e-10
    max_iter: int = 100_000
    oscillation_window: int = 20
    oscillation_ratio: float = 1e6
    record_matrices: bool = False

    def __post_init__(self):
        if not (self.tol_grad > 0 and self.tol_dd > 0):
            raise ValueError("tolerances must be > 0")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")


# --- results -------------------------------------------------------------


class Status(enum.Enum):
    CONVERGED = "converged"
    OSCILLATING = "oscillating"
    MAX_ITERATIONS = "max_iterations"
    WELL_POSEDNESS_FAILURE = "well_posedness_failure"


@dataclass
class IterationRecord:
    k: int
    energy: float
    grad_norm: float
    dd1: Optional[float] = None
    dd2: Optional[float] = None
    gap: Optional[float] = None
    lyapunov: Optional[float] = None
    step: Optional[float] = None


TRACE_COLUMNS = tuple(f.name for f in fields(IterationRecord))


class IterationTrace:
    """Ordered per-iteration records of one run."""

    def __init__(self, records=None):
        self.records: List[IterationRecord] = list(records or [])

    def append(self, record: IterationRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    def column(self, name: str) -> np.ndarray:
        """Column as a float array; missing values become NaN."""
        if name not in TRACE_COLUMNS:
            raise KeyError(name)
        return np.array(
            [np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records],
            dtype=float,
        )

    def first_below(self, tol: float) -> Optional[int]:
        """Smallest ``k`` with ``grad_norm <= tol``."""
        for r in self.records:
            if r.grad_norm <= tol:
                return r.k
        return None


@dataclass
class RunResult:
    status: Status
    final: DensityMatrix
    trace: IterationTrace
    stored_iterates: Optional[List[DensityMatrix]] = None
    algorithm: str = ""
    b: Optional[float] = None
    alpha: Optional[float] = None
    message: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return self.trace[-1].k if len(self.trace) else 0

    @property
    def energy(self) -> float:
        return self.trace[-1].energy


# --- helpers -------------------------------------------------------------


def initial_guess(system, seed: Optional[int] = None, kick: float = 1.0) -> DensityMatrix:
    """Core-Hamiltonian guess ``aufbau(h)``, optionally kicked by a seeded
    random tangent vector of norm ``kick`` and retracted."""
    D = aufbau(system.h, system.n_occ)
    if seed is None:
        return D
    return random_kick(D, seed, kick)


def _differences(history, D):
    dd1 = frobenius_norm(D - history[-1]) if len(history) >= 1 else None
    dd2 = frobenius_norm(D - history[-2]) if len(history) >= 2 else None
    return dd1, dd2


def detect_oscillation(trace, window: int = 20, ratio: float = 1e6, tol_dd: float = 1e-10) -> bool:
    """True when the last ``window`` records show settled even/odd subsequences
    (``dd2 <= tol_dd``) with distinct limits (``dd1 >= ratio * tol_dd``)."""
    records = list(trace)
    if window <= 0 or len(records) < window:
        return False
    tail = records[-window:]
    if any(r.dd1 is None or r.dd2 is None for r in tail):
        return False
    return max(r.dd2 for r in tail) <= tol_dd and min(r.dd1 for r in tail) >= ratio * tol_dd


def alpha_formula(system) -> float:
    """Curvature bound ``||-Δ|| + 4(6N + Z) sqrt(||-Δ||)`` from kinetic metadata."""
    if system.kinetic is None or system.nuclear_charge is None:
        raise ValueError("closed-form alpha needs kinetic matrix and nuclear charge")
    lap = 2.0 * float(np.linalg.eigvalsh(system.kinetic)[-1])
    if lap < 0:
        raise ValueError("kinetic matrix must be positive semidefinite")
    return lap + 4.0 * (6 * system.n_electrons + system.nuclear_charge) * math.sqrt(lap)


def _second_derivative_ratio(system, B, C, tau, sigma):
    # central difference of ε along exp(tC) at tau, divided by ||C||^2
    delta = 1e-3 / sigma
    Dt = conjugate(expm_antisym(tau * C), B)
    Dp = conjugate(expm_antisym((tau + delta) * C), B)
    Dm = conjugate(expm_antisym((tau - delta) * C), B)
    num = ham.energy_difference(system, Dt, Dp) + ham.energy_difference(system, Dt, Dm)
    return abs(num / (system.factor * delta * delta)) / frobenius_norm(C) ** 2


def estimate_alpha(
    system,
    D0: DensityMatrix,
    n_probes: int = 8,
    n_times: int = 8,
    seed: int = 0,
    safety: float = 2.0,
    method: str = "auto",
) -> float:
    """Curvature constant ``α`` with ``|ε''(t)| <= α ||C_0||^2``.

    ``method="formula"`` uses the closed-form bound (needs ``kinetic`` and
    ``nuclear_charge``); ``"empirical"`` takes ``safety`` times the largest
    finite-difference ratio ``|ε''(t)| / ||C_0||^2`` over ``n_probes`` base
    points along the descent curve from ``D0`` and ``n_times`` random times
    on each. ``"auto"`` prefers the formula.
    """
    if method not in ("auto", "formula", "empirical"):
        raise ValueError(f"unknown alpha method {method!r}")
    has_meta = system.kinetic is not None and system.nuclear_charge is not None
    if method == "formula" or (method == "auto" and has_meta):
        return alpha_formula(system)

    rng = np.random.default_rng(seed)
    B = np.asarray(D0.matrix)
    C = commutator(B, ham.fock(system, B))
    if frobenius_norm(C) == 0.0:
        raise ValueError("estimate_alpha: zero gradient at D0; probe from a different point")
    best = 0.0
    for p in range(n_probes):
        sigma = float(np.linalg.norm(C, 2))
        if sigma < 1e-8:
            break
        period = math.pi / sigma
        for tau in rng.uniform(0.0, period, size=n_times):
            best = max(best, _second_derivative_ratio(system, B, C, float(tau), sigma))
        best = max(best, _second_derivative_ratio(system, B, C, 0.0, sigma))
        s = float(rng.uniform(0.1, 1.0)) * period
        B = conjugate(expm_antisym(s * C), B)
        C = commutator(B, ham.fock(system, B))
    if best <= 0.0:
        raise ValueError("estimate_alpha: no curvature detected")
    return safety * best


# --- gradient descent ----------------------------------------------------


def _resolve_step(system, D0, policy, gnorm0):
    """Returns (t or t_init, alpha or None)."""
    has_meta = system.kinetic is not None and system.nuclear_charge is not None
    alpha = alpha_formula(system) if has_meta else None
    if isinstance(policy, FixedStep):
        if alpha is not None and policy.t >= 2.0 / alpha:
            warnings.warn(
                f"fixed step t={policy.t} violates t < 2/alpha = {2.0 / alpha:.3e}; "
                "energy decrease is not guaranteed",
                RuntimeWarning,
                stacklevel=3,
            )
        return policy.t, alpha
    if isinstance(policy, AlphaFormula):
        if alpha is None:
            if gnorm0 == 0.0:
                return 1.0, None
            alpha = estimate_alpha(system, D0)
        return 1.0 / alpha, alpha
    if isinstance(policy, Backtracking):
        if policy.t_init is not None:
            return policy.t_init, alpha
        return (1.0 / alpha if alpha is not None else 1.0), alpha
    raise TypeError(f"unknown step policy {policy!r}")


def run_gradient(system, D0: DensityMatrix, config: SolverConfig) -> RunResult:
    """Riemannian gradient descent ``D_{k+1} = U_k D_k U_k^T``, ``U_k = exp(t_k [D_k, F_k])``."""
    algo = config.algorithm
    if not isinstance(algo, GradientDescent):
        algo = GradientDescent()
    policy = algo.step
    n_occ = system.n_occ
    f = system.factor

    D = D0
    F = ham.fock(system, D)
    E = ham.energy(system, D)
    gnorm = gradient_norm(D, F)
    t_base, alpha = _resolve_step(system, D0, policy, gnorm)

    trace = IterationTrace()
    history: list = []
    stored = [D] if config.record_matrices else None
    status = Status.MAX_ITERATIONS
    k = 0
    while True:
        dd1, dd2 = _differences(history, D.matrix)
        if gnorm <= config.tol_grad:
            trace.append(IterationRecord(k, E, gnorm, dd1, dd2))
            status = Status.CONVERGED
            break
        if k >= config.max_iter:
            trace.append(IterationRecord(k, E, gnorm, dd1, dd2))
            break

        t = t_base
        if isinstance(policy, Backtracking):
            target = policy.armijo * gnorm * gnorm
            fnorm = frobenius_norm(F)
            for _ in range(MAX_HALVINGS + 1):
                X = geodesic_displacement(D, F, t)
                decrease = ham.energy_change(system, D.matrix, X) / f
                # rounding allowance for the evaluation of the decrease
                slack = ROUNDING_SLACK * system.n_basis * fnorm * frobenius_norm(X)
                if decrease <= -t * target + slack:
                    break
                t *= policy.shrink
            else:
                raise NotConvergedError(
                    f"backtracking exhausted {MAX_HALVINGS} reductions at k={k} "
                    f"(||C||={gnorm:.3e}); gradient and energy are inconsistent"
                )
            D_new = settle(D.matrix + X, n_occ)
        else:
            D_new = geodesic_step(D, F, t)

        trace.append(IterationRecord(k, E, gnorm, dd1, dd2, step=t))
        if detect_oscillation(trace, config.oscillation_window, config.oscillation_ratio, config.tol_dd):
            status = Status.OSCILLATING
            break

        if (k + 1) % PURIFY_EVERY == 0 and idempotency_defect(D_new.matrix) > 0.0:
            D_new = DensityMatrix(mcweeny_purify(D_new.matrix, n_occ), n_occ)

        history = (history + [D.matrix])[-2:]
        D = D_new
        F = ham.fock(system, D)
        E = ham.energy(system, D)
        if not math.isfinite(E):
            raise HFError(f"non-finite energy at iteration {k + 1}")
        gnorm = gradient_norm(D, F)
        if stored is not None:
            stored.append(D)
        k += 1

    return RunResult(
        status=status,
        final=D,
        trace=trace,
        stored_iterates=stored,
        algorithm=GradientDescent.name,
        alpha=alpha,
        extras={"step_policy": type(policy).__name__, "t": t_base},
    )


# --- fixed-point iterations ----------------------------------------------


def _run_scf(system, D0: DensityMatrix, config: SolverConfig, b: float, name: str) -> RunResult:
    n_occ = system.n_occ
    D = D0
    trace = IterationTrace()
    history: list = []
    stored = [D] if config.record_matrices else None
    status = Status.MAX_ITERATIONS
    message = ""
    k = 0
    while True:
        F = ham.fock(system, D)
        Fb = ham.shifted_fock(system, D, b)
        E = ham.energy(system, D)
        if not math.isfinite(E):
            raise HFError(f"non-finite energy at iteration {k}")
        gnorm = gradient_norm(D, F)
        dd1, dd2 = _differences(history, D.matrix)
        gap_k = gap(Fb, n_occ)
        try:
            D_next = aufbau(Fb, n_occ)
        except WellPosednessError as exc:
            trace.append(IterationRecord(k, E, gnorm, dd1, dd2, gap_k))
            status = Status.WELL_POSEDNESS_FAILURE
            message = str(exc)
            break
        lyap = ham.shifted_bilinear_energy(system, D, D_next, b)
        trace.append(IterationRecord(k, E, gnorm, dd1, dd2, gap_k, lyap))
        if gnorm <= config.tol_grad:
            status = Status.CONVERGED
            break
        if detect_oscillation(trace, config.oscillation_window, config.oscillation_ratio, config.tol_dd):
            status = Status.OSCILLATING
            break
        if k >= config.max_iter:
            break
        history = (history + [D.matrix])[-2:]
        D = D_next
        if stored is not None:
            stored.append(D)
        k += 1

    return RunResult(
        status=status,
        final=D,
        trace=trace,
        stored_iterates=stored,
        algorithm=name,
        b=b,
        message=message,
    )


def run_roothaan(system, D0: DensityMatrix, config: SolverConfig) -> RunResult:
    """Roothaan iteration ``D_{k+1} = aufbau(F(D_k))``.

    ``lyapunov`` records the bilinear energy ``E(D_k, D_{k+1})`` and ``gap``
    the frontier gap of ``F(D_k)``.
    """
    return _run_scf(system, D0, config, 0.0, Roothaan.name)


def run_level_shifting(system, D0: DensityMatrix, config: SolverConfig, b: Optional[float] = None) -> RunResult:
    """Level-Shifting ``D_{k+1} = aufbau(F(D_k) - b D_k)``.

    Convergence is judged on the unshifted residual ``||[D, F(D)]||``.
    """
    if b is None:
        algo = config.algorithm
        if not isinstance(algo, LevelShifting):
            raise ValueError("run_level_shifting needs a shift b (argument or LevelShifting config)")
        b = algo.b
    if b < 0:
        raise ValueError(f"shift b must be >= 0, got {b}")
    return _run_scf(system, D0, config, float(b), LevelShifting.name)


class ShiftSearchError(NotConvergedError):
    """No shift up to the cap produced a converged Level-Shifting run."""

    def __init__(self, attempts):
        self.attempts = attempts
        listing = ", ".join(f"b={b:g}: {s.value}" for b, s in attempts)
        super().__init__(f"no convergent level shift found; attempts: {listing}")


def auto_shift(system, D0: DensityMatrix, config: SolverConfig, b_max: float = 2.0**16):
    """Try ``b = 0, 1, 2, 4, ...`` until Level-Shifting converges.

    Returns ``(b, result)`` for the first convergent shift.
    """
    attempts = []
    b = 0.0
    while b <= b_max:
        result = run_level_shifting(system, D0, config, b)
        attempts.append((b, result.status))
        log.debug("auto_shift b=%g -> %s after %d iterations", b, result.status.value, result.iterations)
        if result.status is Status.CONVERGED:
            return b, result
        b = 1.0 if b == 0.0 else 2.0 * b
    raise ShiftSearchError(attempts)


def run(system, D0: DensityMatrix, config: SolverConfig) -> RunResult:
    """Dispatch on ``config.algorithm``."""
    algo = config.algorithm
    if isinstance(algo, GradientDescent):
        return run_gradient(system, D0, config)
    if isinstance(algo, Roothaan):
        return run_roothaan(system, D0, config)
    if isinstance(algo, LevelShifting):
        return run_level_shifting(system, D0, config)
    raise TypeError(f"unknown algorithm {algo!r}")


def is_aufbau_solution(system, result: RunResult, tol: float = 1e-6) -> Optional[bool]:
    """Whether the final iterate is the aufbau projector of its own (shifted) Fock matrix.

    Returns ``None`` when the frontier gap is below ``tol`` (check not meaningful).
    """
    b = result.b or 0.0
    Fb = ham.shifted_fock(system, result.final, b)
    if gap(Fb, system.n_occ) <= tol:
        return None
    return frobenius_norm(aufbau(Fb, system.n_occ).matrix - result.final.matrix) <= tol
