"""Electronic-structure data model and the Hartree-Fock energy functionals.

Two occupation conventions are supported. ``SPINLESS`` uses
``G(D) = J(D) - K(D)`` and ``E(D) = Tr(hD) + Tr(G(D)D)/2``. ``RHF`` treats
``D`` as the spatial-orbital projector of trace ``N/2`` and uses the
spin-summed ``G(D) = 2J(D) - K(D)`` with ``E(D) = 2Tr(hD) + Tr(G(D)D)``.
In both cases the unconstrained gradient of ``E`` is ``f * F(D)`` with
occupation factor ``f`` (1 or 2).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .eri import EriTensor, n_packed
from .errors import DimensionError, ManifoldError
from .matops import frobenius_inner, projector_violation, sym

__all__ = [
    "Convention",
    "ElectronicSystem",
    "EriTensor",
    "coulomb",
    "exchange",
    "g_matrix",
    "fock",
    "energy",
    "energy_unchecked",
    "energy_change",
    "energy_difference",
    "bilinear_energy",
    "shifted_fock",
    "shifted_bilinear_energy",
    "hubbard_ring",
    "random_system",
    "conjugate_system",
]


class Convention(enum.Enum):
    SPINLESS = "spinless"
    RHF = "rhf"

    @property
    def factor(self) -> int:
        """Occupation factor ``f``: electrons per occupied spatial orbital."""
        return 1 if self is Convention.SPINLESS else 2

    @classmethod
    def parse(cls, value) -> "Convention":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"spinless": cls.SPINLESS, "rhf": cls.RHF, "restrictedclosedshell": cls.RHF}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown occupation convention {value!r}") from None


@dataclass(frozen=True, eq=False)
class ElectronicSystem:
    """Discretized problem data in an orthonormal basis (Hartree units).

    ``kinetic`` (the matrix of -Δ/2) and ``nuclear_charge`` are optional and
    only used by the closed-form curvature bound in
    :func:`hfconv.solvers.estimate_alpha`.
    """

    h: np.ndarray
    eri: EriTensor
    n_electrons: int
    convention: Convention = Convention.SPINLESS
    core_energy: float = 0.0
    kinetic: Optional[np.ndarray] = None
    nuclear_charge: Optional[int] = None
    n_basis: int = field(init=False)

    def __post_init__(self):
        h = sym(self.h)
        h.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "convention", Convention.parse(self.convention))
        object.__setattr__(self, "n_basis", h.shape[0])
        object.__setattr__(self, "core_energy", float(self.core_energy))
        if not isinstance(self.eri, EriTensor):
            object.__setattr__(self, "eri", EriTensor.from_dense(self.eri))
        if self.eri.n_basis != self.n_basis:
            raise DimensionError(f"eri dimension {self.eri.n_basis} != h dimension {self.n_basis}")
        if self.kinetic is not None:
            T = sym(self.kinetic)
            if T.shape != h.shape:
                raise DimensionError(f"kinetic shape {T.shape} != h shape {h.shape}")
            T.setflags(write=False)
            object.__setattr__(self, "kinetic", T)
        if self.n_electrons < 0:
            raise ValueError("n_electrons must be non-negative")
        if self.convention is Convention.RHF and self.n_electrons % 2:
            raise ValueError(f"RHF requires an even electron count, got {self.n_electrons}")
        if self.n_occ > self.n_basis:
            raise ValueError(f"n_occ={self.n_occ} exceeds n_basis={self.n_basis}")

    @property
    def factor(self) -> int:
        return self.convention.factor

    @property
    def n_occ(self) -> int:
        return self.n_electrons // self.factor

    def with_convention(self, convention) -> "ElectronicSystem":
        return replace(self, convention=Convention.parse(convention))

    def __eq__(self, other):
        if not isinstance(other, ElectronicSystem):
            return NotImplemented
        return (
            self.n_electrons == other.n_electrons
            and self.convention is other.convention
            and self.core_energy == other.core_energy
            and np.array_equal(self.h, other.h)
            and self.eri == other.eri
            and _opt_equal(self.kinetic, other.kinetic)
            and self.nuclear_charge == other.nuclear_charge
        )


def _opt_equal(a, b):
    if a is None or b is None:
        return a is b
    return np.array_equal(a, b)


def _as_matrix(system: ElectronicSystem, D) -> np.ndarray:
    D = np.asarray(getattr(D, "matrix", D), dtype=float)
    if D.shape != (system.n_basis, system.n_basis):
        raise DimensionError(f"density shape {D.shape} does not match n_basis={system.n_basis}")
    return D


def _checked(system: ElectronicSystem, D) -> np.ndarray:
    D = _as_matrix(system, D)
    problem = projector_violation(D, system.n_occ)
    if problem is not None:
        raise ManifoldError(f"density matrix outside the manifold: {problem}")
    return D


def coulomb(system: ElectronicSystem, D) -> np.ndarray:
    """Direct term ``J(D)_{ij} = sum_{kl} (ij|kl) D_{kl}``."""
    D = _as_matrix(system, D)
    n = system.n_basis
    return sym((system.eri.coulomb_operator @ D.reshape(n * n)).reshape(n, n))


def exchange(system: ElectronicSystem, D) -> np.ndarray:
    """Exchange term ``K(D)_{ij} = sum_{kl} (ik|jl) D_{kl}``."""
    D = _as_matrix(system, D)
    n = system.n_basis
    return sym((system.eri.exchange_operator @ D.reshape(n * n)).reshape(n, n))


def g_matrix(system: ElectronicSystem, D) -> np.ndarray:
    J = coulomb(system, D)
    K = exchange(system, D)
    if system.convention is Convention.SPINLESS:
        return J - K
    return 2.0 * J - K


def fock(system: ElectronicSystem, D) -> np.ndarray:
    """``F(D) = h + G(D)``."""
    return system.h + g_matrix(system, D)


def energy_unchecked(system: ElectronicSystem, D) -> float:
    """Energy formula evaluated for any symmetric ``D`` (no manifold check)."""
    D = _as_matrix(system, D)
    f = system.factor
    G = g_matrix(system, D)
    return f * frobenius_inner(system.h, D) + 0.5 * f * frobenius_inner(G, D) + system.core_energy


def energy(system: ElectronicSystem, D) -> float:
    """Total energy of a density matrix, core energy included."""
    return energy_unchecked(system, _checked(system, D))


def energy_change(system: ElectronicSystem, D, X) -> float:
    """``E(D + X) - E(D)`` as ``f * (Tr(F(D) X) + Tr(G(X) X) / 2)``.

    Exact for the quadratic energy, and free of the cancellation incurred by
    subtracting two nearly equal energies.
    """
    D = _as_matrix(system, D)
    X = _as_matrix(system, X)
    f = system.factor
    return f * (frobenius_inner(fock(system, D), X) + 0.5 * frobenius_inner(g_matrix(system, X), X))


def energy_difference(system: ElectronicSystem, D, D_new) -> float:
    """``E(D_new) - E(D)`` via :func:`energy_change`."""
    D = _as_matrix(system, D)
    return energy_change(system, D, _as_matrix(system, D_new) - D)


def bilinear_energy(system: ElectronicSystem, D, D2) -> float:
    """``f Tr(h(D + D')) + f Tr(G(D) D') + 2 E_core``; symmetric in its arguments."""
    D = _checked(system, D)
    D2 = _checked(system, D2)
    f = system.factor
    return (
        f * frobenius_inner(system.h, D + D2)
        + f * frobenius_inner(g_matrix(system, D), D2)
        + 2.0 * system.core_energy
    )


def shifted_fock(system: ElectronicSystem, D, b: float) -> np.ndarray:
    """Level-shifted Fock matrix ``F(D) - b D``."""
    if b < 0:
        raise ValueError(f"shift b must be >= 0, got {b}")
    D = _as_matrix(system, D)
    return fock(system, D) - b * D


def shifted_bilinear_energy(system: ElectronicSystem, D, D2, b: float) -> float:
    """Bilinear energy plus ``f * b/2 * ||D - D'||^2``.

    The factor ``f`` makes alternating minimization of this functional
    reproduce the aufbau update on ``F(D) - b D`` in both conventions.
    """
    if b < 0:
        raise ValueError(f"shift b must be >= 0, got {b}")
    base = bilinear_energy(system, D, D2)
    diff = _as_matrix(system, D) - _as_matrix(system, D2)
    return base + system.factor * 0.5 * b * frobenius_inner(diff, diff)


def hubbard_ring(L: int, t_h: float, U: float, n_electrons: int, convention="rhf") -> ElectronicSystem:
    """Periodic 1-D Hubbard model in the orthonormal site basis."""
    if L < 1:
        raise ValueError("L must be >= 1")
    if t_h <= 0:
        raise ValueError("hopping t_h must be > 0")
    h = np.zeros((L, L))
    for i in range(L):
        j = (i + 1) % L
        if j != i:
            h[i, j] = h[j, i] = -t_h
    eri = EriTensor.from_entries(L, [(i, i, i, i, U) for i in range(L)])
    return ElectronicSystem(h=h, eri=eri, n_electrons=n_electrons, convention=convention)


def random_system(
    seed: int,
    n_basis: int,
    n_electrons: int,
    convention="spinless",
    interaction_scale: float = 0.5,
) -> ElectronicSystem:
    """Seeded random system: ``h`` entries uniform in [-1, 1], one i.i.d.
    uniform value in ``[-s, s]`` per ERI symmetry class."""
    rng = np.random.default_rng(seed)
    upper = rng.uniform(-1.0, 1.0, size=(n_basis, n_basis))
    h = np.triu(upper) + np.triu(upper, 1).T
    packed = interaction_scale * rng.uniform(-1.0, 1.0, size=n_packed(n_basis))
    return ElectronicSystem(
        h=h, eri=EriTensor(n_basis, packed), n_electrons=n_electrons, convention=convention
    )


def conjugate_system(system: ElectronicSystem, Q) -> ElectronicSystem:
    """The same physics in a rotated orthonormal basis: ``h -> Q h Q^T``."""
    Q = np.asarray(Q, dtype=float)
    g = np.einsum("ip,jq,kr,ls,pqrs->ijkl", Q, Q, Q, Q, system.eri.dense, optimize=True)
    kinetic = None if system.kinetic is None else Q @ system.kinetic @ Q.T
    return replace(
        system,
        h=Q @ system.h @ Q.T,
        eri=EriTensor.from_dense(g, atol=1e-8),
        kinetic=kinetic,
    )

