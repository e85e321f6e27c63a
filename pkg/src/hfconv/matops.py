"""Dense real symmetric/antisymmetric matrix kernels.

Matrices are plain ``numpy.ndarray`` values. Functions never modify their
inputs; results are fresh arrays.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .eri import EriTensor
from .errors import DimensionError, ManifoldError, NotConvergedError

PURIFY_MAX_ITER = 50
PURIFY_TOL = 1e-12


class Spectrum(NamedTuple):
    """Ascending eigenvalues with matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _square(A, name="matrix"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise DimensionError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    return A


def _same_shape(A, B):
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch: {A.shape} vs {B.shape}")


def sym(A):
    """Symmetric part ``(A + A.T) / 2``; the result is exactly symmetric."""
    A = _square(A)
    return 0.5 * (A + A.T)


def antisym(A):
    """Antisymmetric part ``(A - A.T) / 2`` with an exactly zero diagonal."""
    A = _square(A)
    return 0.5 * (A - A.T)


def frobenius_inner(A, B) -> float:
    """Canonical inner product ``Tr(A^T B)``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    _same_shape(A, B)
    return float(np.sum(A * B))


def frobenius_norm(A) -> float:
    return float(np.sqrt(frobenius_inner(A, A)))


def commutator(A, B):
    """``AB - BA``."""
    A = _square(A)
    B = _square(B)
    _same_shape(A, B)
    return A @ B - B @ A


def _fix_signs(V):
    # first nonzero component of every column made positive
    V = V.copy()
    for j in range(V.shape[1]):
        col = V[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-14)
        if nz.size and col[nz[0]] < 0:
            V[:, j] = -col
    return V


def sym_eig(A) -> Spectrum:
    """Full eigendecomposition of a symmetric matrix, ascending.

    Eigenvector signs are fixed so that the first nonzero component of
    each column is positive.
    """
    A = sym(A)
    if not np.all(np.isfinite(A)):
        raise ValueError("sym_eig: non-finite entries")
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NotConvergedError(f"symmetric eigensolver did not converge: {exc}") from exc
    return Spectrum(w, _fix_signs(V))


def expm1_antisym(A):
    """``exp(A) - I`` for antisymmetric ``A``, accurate relative to ``||A||``.

    Uses the Hermitian eigendecomposition of ``iA``: with
    ``iA = V diag(w) V^H`` one has ``exp(A) = V diag(exp(-i w)) V^H``.
    """
    A = _square(A)
    if not np.all(np.isfinite(A)):
        raise ValueError("expm_antisym: non-finite entries")
    A = antisym(A)
    try:
        w, V = np.linalg.eigh(1j * A)
    except np.linalg.LinAlgError as exc:
        raise NotConvergedError(f"eigensolver failed in expm: {exc}") from exc
    half = np.sin(0.5 * w)
    # exp(-iw) - 1 = -2 sin^2(w/2) - i sin(w)
    e1 = -2.0 * half * half - 1j * np.sin(w)
    return ((V * e1) @ V.conj().T).real


def expm_antisym(A):
    """Matrix exponential of an antisymmetric matrix (an orthogonal matrix)."""
    W = expm1_antisym(A)
    return W + np.eye(W.shape[0])


def orthogonality_defect(U) -> float:
    U = _square(U)
    return frobenius_norm(U.T @ U - np.eye(U.shape[0]))


def idempotency_defect(D) -> float:
    """``||D^2 - D||_F``."""
    D = _square(D)
    return frobenius_norm(D @ D - D)


def mcweeny_purify(D_approx, n_occ: int, tol: float = PURIFY_TOL):
    """Drive a near-projector to idempotency with ``D <- 3D^2 - 2D^3``.

    The input must lie in the purification basin: all eigenvalues in
    (-0.5, 1.5), exactly ``n_occ`` of them above 1/2, none within 1e-8 of
    the unstable fixed point 1/2.
    """
    D = sym(D_approx)
    n = D.shape[0]
    w = np.linalg.eigvalsh(D)
    if np.any(np.abs(w - 0.5) <= 1e-8):
        raise ManifoldError("mcweeny_purify: eigenvalue at the unstable fixed point 1/2")
    if w[0] <= -0.5 or w[-1] >= 1.5:
        raise ManifoldError(
            f"mcweeny_purify: eigenvalues [{w[0]:.3g}, {w[-1]:.3g}] outside the basin (-0.5, 1.5)"
        )
    n_high = int(np.sum(w > 0.5))
    if n_high != n_occ:
        raise ManifoldError(f"mcweeny_purify: {n_high} eigenvalues above 1/2, expected {n_occ}")
    for _ in range(PURIFY_MAX_ITER + 1):
        D2 = D @ D
        if frobenius_norm(D2 - D) <= tol:
            break
        D = sym(3.0 * D2 - 2.0 * D2 @ D)
    else:
        raise NotConvergedError(f"mcweeny_purify: no convergence in {PURIFY_MAX_ITER} iterations")
    if abs(np.trace(D) - n_occ) > 1e-8 * max(1, n):
        raise ManifoldError(f"mcweeny_purify: trace {np.trace(D)!r} differs from n_occ={n_occ}")
    return D


def inverse_sqrt(S):
    """``S^{-1/2}`` for a symmetric positive definite matrix."""
    w, V = sym_eig(S)
    if w[0] <= 1e-10:
        raise ManifoldError(f"overlap matrix is not positive definite: smallest eigenvalue {w[0]!r}")
    return sym((V / np.sqrt(w)) @ V.T)


def lowdin_orthonormalize(h, eri, S):
    """Transform ``h`` and the two-electron integrals into the Löwdin basis.

    ``eri`` may be an :class:`~hfconv.eri.EriTensor` or a dense 4-index
    array; the same kind is returned.
    """
    h = sym(h)
    S = sym(S)
    _same_shape(h, S)
    X = inverse_sqrt(S)
    h2 = sym(X @ h @ X)
    dense = eri.dense if isinstance(eri, EriTensor) else np.asarray(eri, dtype=float)
    if dense.shape != (h.shape[0],) * 4:
        raise DimensionError(f"eri shape {dense.shape} does not match h {h.shape}")
    g = np.einsum("pi,qj,rk,sl,pqrs->ijkl", X, X, X, X, dense, optimize=True)
    if isinstance(eri, EriTensor):
        return h2, EriTensor.from_dense(g, atol=1e-8)
    return h2, g


def projector_violation(D, n_occ: int, idem_tol: float | None = None, trace_tol: float = 1e-8):
    """Describe how ``D`` fails to be a rank-``n_occ`` orthogonal projector.

    Returns ``None`` when symmetry, idempotency (``<= 1e-10 * n`` by default)
    and trace constraints all hold.
    """
    D = _square(D)
    n = D.shape[0]
    if idem_tol is None:
        idem_tol = 1e-10 * n
    asym = frobenius_norm(D - D.T)
    if asym > 1e-12:
        return f"not symmetric (||D - D^T|| = {asym:.3e})"
    idem = idempotency_defect(D)
    if idem > idem_tol:
        return f"not idempotent (||D^2 - D|| = {idem:.3e} > {idem_tol:.1e})"
    tr = float(np.trace(D))
    if abs(tr - n_occ) > trace_tol:
        return f"trace {tr!r} differs from n_occ={n_occ}"
    return None
