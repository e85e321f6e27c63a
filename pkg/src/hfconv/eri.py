"""Two-electron integrals ``(ij|kl)`` (chemist notation) with 8-fold symmetry."""
from __future__ import annotations

from functools import cached_property

import numpy as np

from .errors import DimensionError


def pair_index(i: int, j: int) -> int:
    """Composite index of the unordered pair (i, j), 0-based."""
    if i < j:
        i, j = j, i
    return i * (i + 1) // 2 + j


def quad_index(i: int, j: int, k: int, l: int) -> int:
    """Packed position of ``(ij|kl)`` under 8-fold permutational symmetry."""
    return pair_index(pair_index(i, j), pair_index(k, l))


def n_packed(n_basis: int) -> int:
    npair = n_basis * (n_basis + 1) // 2
    return npair * (npair + 1) // 2


def canonical_quads(n_basis: int):
    """Yield canonical 0-based index quadruples in packed order."""
    pairs = [(i, j) for i in range(n_basis) for j in range(i + 1)]
    for ij, (i, j) in enumerate(pairs):
        for k, l in pairs[: ij + 1]:
            yield i, j, k, l


class EriTensor:
    """Packed 8-fold symmetric two-electron integral tensor.

    Values are stored once per symmetry class; ``dense`` expands them to a
    full ``n**4`` array on first use. Instances are immutable.
    """

    def __init__(self, n_basis: int, packed):
        packed = np.array(packed, dtype=float)
        if packed.shape != (n_packed(n_basis),):
            raise DimensionError(
                f"packed eri for n_basis={n_basis} needs {n_packed(n_basis)} values, got {packed.shape}"
            )
        if not np.all(np.isfinite(packed)):
            raise ValueError("eri values must be finite")
        packed.setflags(write=False)
        self.n_basis = int(n_basis)
        self.packed = packed

    @classmethod
    def zeros(cls, n_basis: int) -> "EriTensor":
        return cls(n_basis, np.zeros(n_packed(n_basis)))

    @classmethod
    def from_dense(cls, dense, atol: float = 1e-10) -> "EriTensor":
        """Pack a full tensor, averaging each symmetry class.

        Raises ``ValueError`` if members of a class differ by more than ``atol``.
        """
        g = np.asarray(dense, dtype=float)
        n = g.shape[0]
        if g.shape != (n, n, n, n):
            raise DimensionError(f"dense eri must be n^4, got {g.shape}")
        variants = [
            g,
            g.transpose(1, 0, 2, 3),
            g.transpose(0, 1, 3, 2),
            g.transpose(1, 0, 3, 2),
            g.transpose(2, 3, 0, 1),
            g.transpose(3, 2, 0, 1),
            g.transpose(2, 3, 1, 0),
            g.transpose(3, 2, 1, 0),
        ]
        spread = max(float(np.max(np.abs(v - g))) for v in variants[1:]) if n else 0.0
        if spread > atol:
            raise ValueError(f"dense eri breaks 8-fold symmetry by {spread:.3e}")
        avg = sum(variants) / 8.0
        packed = np.array([avg[q] for q in canonical_quads(n)])
        return cls(n, packed)

    @classmethod
    def from_entries(cls, n_basis: int, entries) -> "EriTensor":
        """Build from ``(i, j, k, l, value)`` tuples with 0-based indices."""
        packed = np.zeros(n_packed(n_basis))
        for i, j, k, l, v in entries:
            packed[quad_index(i, j, k, l)] = v
        return cls(n_basis, packed)

    def __getitem__(self, idx) -> float:
        i, j, k, l = idx
        return float(self.packed[quad_index(i, j, k, l)])

    def __eq__(self, other):
        if not isinstance(other, EriTensor):
            return NotImplemented
        return self.n_basis == other.n_basis and np.array_equal(self.packed, other.packed)

    def __repr__(self):
        return f"EriTensor(n_basis={self.n_basis}, nnz={int(np.count_nonzero(self.packed))})"

    def entries(self):
        """Nonzero canonical entries as 0-based ``(i, j, k, l, value)``."""
        return [
            (i, j, k, l, float(v))
            for (i, j, k, l), v in zip(canonical_quads(self.n_basis), self.packed)
            if v != 0.0
        ]

    @cached_property
    def dense(self) -> np.ndarray:
        n = self.n_basis
        g = np.zeros((n, n, n, n))
        for (i, j, k, l), v in zip(canonical_quads(n), self.packed):
            if v == 0.0:
                continue
            for a, b, c, d in (
                (i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k),
                (k, l, i, j), (l, k, i, j), (k, l, j, i), (l, k, j, i),
            ):
                g[a, b, c, d] = v
        g.setflags(write=False)
        return g

    @cached_property
    def coulomb_operator(self) -> np.ndarray:
        """``(ij|kl)`` reshaped to ``(n^2, n^2)`` so ``J = op @ vec(D)``."""
        n = self.n_basis
        return np.ascontiguousarray(self.dense.reshape(n * n, n * n))

    @cached_property
    def exchange_operator(self) -> np.ndarray:
        """``(ik|jl)`` reshaped to ``(n^2, n^2)`` so ``K = op @ vec(D)``."""
        n = self.n_basis
        return np.ascontiguousarray(self.dense.transpose(0, 2, 1, 3).reshape(n * n, n * n))
