"""The manifold of rank-N orthogonal projectors and its first-order geometry.

Descent orientation: ``D_t = U D U^T`` with ``U = exp(t [D, F])`` moves
along ``-[D, [D, F]]``, so the energy decreases for small ``t > 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hamiltonian as ham
from .errors import DimensionError, ManifoldError, WellPosednessError
from .matops import (
    commutator,
    expm1_antisym,
    expm_antisym,
    frobenius_norm,
    idempotency_defect,
    mcweeny_purify,
    projector_violation,
    sym,
    sym_eig,
)

PURIFY_THRESHOLD = 5e-11
TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Symmetric idempotent matrix with trace ``n_occ``."""

    matrix: np.ndarray
    n_occ: int

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        problem = projector_violation(M, self.n_occ)
        if problem is not None:
            raise ManifoldError(f"not a density matrix: {problem}")
        M = sym(M)
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def n_basis(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Symmetric ``Δ`` with ``DΔ + ΔD = Δ`` and ``Tr Δ = 0`` at ``base``."""

    matrix: np.ndarray
    base: DensityMatrix

    def __post_init__(self):
        X = sym(self.matrix)
        D = self.base.matrix
        if X.shape != D.shape:
            raise DimensionError(f"tangent shape {X.shape} != base shape {D.shape}")
        scale = max(1.0, frobenius_norm(X))
        defect = frobenius_norm(D @ X + X @ D - X)
        if defect > 1e-10 * scale:
            raise ManifoldError(f"not tangent at base: ||DΔ + ΔD - Δ|| = {defect:.3e}")
        if abs(np.trace(X)) > 1e-10 * scale:
            raise ManifoldError(f"tangent vector has trace {np.trace(X):.3e}")
        X.setflags(write=False)
        object.__setattr__(self, "matrix", X)

    @property
    def norm(self) -> float:
        return frobenius_norm(self.matrix)


def _mat(D):
    return np.asarray(getattr(D, "matrix", D), dtype=float)


def project_to_manifold(M, n_occ: int) -> DensityMatrix:
    """Spectral projector onto the ``n_occ`` largest-eigenvalue eigenvectors of ``M``."""
    w, V = sym_eig(M)
    n = len(w)
    cut = n - n_occ
    if 0 < n_occ < n and w[cut] - w[cut - 1] < TIE_TOL:
        raise WellPosednessError(w[cut - 1], w[cut], n_occ)
    occ = V[:, cut:]
    return DensityMatrix(sym(occ @ occ.T), n_occ)


def tangent_project(D: DensityMatrix, M) -> TangentVector:
    """``P_D(M) = [D, [D, M]] = DM(1 - D) + (1 - D)MD``."""
    Dm = _mat(D)
    M = sym(M)
    if M.shape != Dm.shape:
        raise DimensionError(f"shape mismatch: {Dm.shape} vs {M.shape}")
    return TangentVector(sym(commutator(Dm, commutator(Dm, M))), D)


def riemannian_gradient(D: DensityMatrix, F) -> TangentVector:
    """Constrained gradient ``[D, [D, F]]``; its norm equals ``||[D, F]||``."""
    return tangent_project(D, F)


def gradient_norm(D, F) -> float:
    return frobenius_norm(commutator(_mat(D), F))


def conjugate(U, D):
    return sym(U @ D @ U.T)


def settle(M, n_occ: int, threshold: float = PURIFY_THRESHOLD) -> DensityMatrix:
    if idempotency_defect(M) > threshold:
        M = mcweeny_purify(M, n_occ)
    return DensityMatrix(M, n_occ)


def geodesic_displacement(D: DensityMatrix, F, t: float):
    """``X = U D U^T - D`` for ``U = exp(t [D, F])``, computed without cancellation.

    With ``W = U - I``: ``X = W D + D W^T + W D W^T``.
    """
    if not np.isfinite(t):
        raise ValueError(f"step t must be finite, got {t}")
    Dm = _mat(D)
    W = expm1_antisym(t * commutator(Dm, F))
    WD = W @ Dm
    return sym(WD + WD.T + WD @ W.T)


def geodesic_step(D: DensityMatrix, F, t: float) -> DensityMatrix:
    """``U D U^T`` with ``U = exp(t [D, F])``; purified if drift exceeds 5e-11."""
    return settle(_mat(D) + geodesic_displacement(D, F, t), D.n_occ)


def retraction(D0: DensityMatrix, delta: TangentVector) -> DensityMatrix:
    """``R_{D0}(Δ) = U D0 U^T`` with ``U = exp(-[D0, Δ])``."""
    if delta.base is not D0 and not np.array_equal(delta.base.matrix, D0.matrix):
        raise ManifoldError("tangent vector is not anchored at the retraction base point")
    U = expm_antisym(-commutator(D0.matrix, delta.matrix))
    return settle(conjugate(U, D0.matrix), D0.n_occ)


def aufbau(F, n_occ: int) -> DensityMatrix:
    """Projector onto the eigenvectors of the ``n_occ`` lowest eigenvalues of ``F``.

    Raises :class:`WellPosednessError` when eigenvalues ``n_occ`` and
    ``n_occ + 1`` are closer than 1e-12.
    """
    w, V = sym_eig(F)
    n = len(w)
    if 0 < n_occ < n and w[n_occ] - w[n_occ - 1] <= TIE_TOL:
        raise WellPosednessError(w[n_occ - 1], w[n_occ], n_occ)
    occ = V[:, :n_occ]
    return DensityMatrix(sym(occ @ occ.T), n_occ)


def gap(F, n_occ: int) -> float:
    """``λ_{n_occ+1} - λ_{n_occ}`` (ascending, 1-based); ``inf`` if there is no frontier."""
    w = sym_eig(F).eigenvalues
    if n_occ <= 0 or n_occ >= len(w):
        return float("inf")
    return float(w[n_occ] - w[n_occ - 1])


def curve_energy(system, D: DensityMatrix, C, t: float) -> float:
    """``E(U D U^T) / f`` for ``U = exp(t C)``, with ``C`` antisymmetric.

    Dividing by the occupation factor makes the slope at ``t = 0`` equal to
    ``-||C||^2`` for ``C = [D, F(D)]`` in both conventions.
    """
    Dm = _mat(D)
    Dt = conjugate(expm_antisym(t * C), Dm)
    return ham.energy_unchecked(system, Dt) / system.factor


def energy_curve_probe(system, D: DensityMatrix, t_max: float, n_samples: int):
    """Sample ``ε(t)`` on ``[0, t_max]`` along the descent curve from ``D``.

    ``ε(t) = E(D_t) / f`` where ``D_t = geodesic_step(D, F(D), t)``.
    """
    F = ham.fock(system, D)
    ts = np.linspace(0.0, t_max, n_samples)
    f = system.factor
    return [(float(t), ham.energy(system, geodesic_step(D, F, t)) / f) for t in ts]


def random_density(rng, n_basis: int, n_occ: int) -> DensityMatrix:
    """Haar-random rank-``n_occ`` projector."""
    Q, R = np.linalg.qr(rng.standard_normal((n_basis, n_basis)))
    Q = Q * np.sign(np.diag(R))
    occ = Q[:, :n_occ]
    return DensityMatrix(sym(occ @ occ.T), n_occ)


def random_tangent(rng, D: DensityMatrix, norm: float = 1.0) -> TangentVector:
    M = rng.standard_normal(D.matrix.shape)
    X = tangent_project(D, M + M.T).matrix
    size = frobenius_norm(X)
    if size == 0.0:
        return TangentVector(X, D)
    return TangentVector(X * (norm / size), D)


def random_kick(D: DensityMatrix, seed: int, norm: float = 1.0) -> DensityMatrix:
    """Retract a seeded random tangent vector of the given norm at ``D``."""
    rng = np.random.default_rng(seed)
    return retraction(D, random_tangent(rng, D, norm))
