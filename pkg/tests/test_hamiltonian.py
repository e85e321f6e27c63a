import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hfconv import hamiltonian as ham
from hfconv.eri import EriTensor, canonical_quads, n_packed, quad_index
from hfconv.errors import DimensionError, ManifoldError
from hfconv.manifold import aufbau, random_density
from hfconv.matops import frobenius_inner, sym


def symmetric_dense(rng, n):
    """Random chemist-notation tensor with exact 8-fold symmetry (oracle input)."""
    g = rng.standard_normal((n, n, n, n))
    g = g + g.transpose(1, 0, 2, 3)
    g = g + g.transpose(0, 1, 3, 2)
    g = g + g.transpose(2, 3, 0, 1)
    return g / 8


def half():
    return 0.5 * np.ones((2, 2))


# --- eri storage ---------------------------------------------------------


def test_packed_count_matches_canonical_enumeration():
    for n in range(1, 6):
        quads = list(canonical_quads(n))
        assert len(quads) == n_packed(n)
        assert [quad_index(*q) for q in quads] == list(range(n_packed(n)))


def test_eight_fold_symmetry_on_random_indices(rng):
    system = ham.random_system(3, 6, 2)
    for _ in range(100):
        i, j, k, l = rng.integers(0, 6, size=4)
        variants = {
            system.eri[a, b, c, d]
            for a, b, c, d in [(i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k),
                               (k, l, i, j), (l, k, i, j), (k, l, j, i), (l, k, j, i)]
        }
        assert len(variants) == 1


def test_from_dense_roundtrip(rng):
    g = symmetric_dense(rng, 4)
    eri = EriTensor.from_dense(g)
    assert np.array_equal(eri.dense, eri.dense.transpose(2, 3, 0, 1))
    assert np.max(np.abs(eri.dense - g)) <= 1e-15


def test_from_dense_rejects_broken_symmetry(rng):
    g = symmetric_dense(rng, 3)
    g[0, 1, 2, 2] += 1e-3
    with pytest.raises(ValueError):
        EriTensor.from_dense(g)


def test_eri_rejects_non_finite():
    with pytest.raises(ValueError):
        EriTensor(1, [np.inf])


def test_from_entries_and_entries_listing():
    eri = EriTensor.from_entries(3, [(0, 1, 2, 2, 0.5), (2, 2, 1, 0, 0.5)])
    assert eri[1, 0, 2, 2] == 0.5
    assert eri.entries() == [(2, 2, 1, 0, 0.5)]


# --- contractions against einsum oracles ---------------------------------


def test_coulomb_exchange_match_einsum(rng):
    n = 5
    g = symmetric_dense(rng, n)
    system = ham.ElectronicSystem(sym(rng.standard_normal((n, n))), EriTensor.from_dense(g), 2)
    D = sym(rng.standard_normal((n, n)))
    assert np.allclose(ham.coulomb(system, D), np.einsum("ijkl,kl->ij", g, D), atol=1e-13)
    assert np.allclose(ham.exchange(system, D), np.einsum("ikjl,kl->ij", g, D), atol=1e-13)


def test_hubbard_dimer_contractions(dimer_rhf):
    D = np.diag([1.0, 0.0])
    assert np.array_equal(ham.coulomb(dimer_rhf, D), np.diag([2.0, 0.0]))
    assert np.array_equal(ham.exchange(dimer_rhf, D), np.diag([2.0, 0.0]))
    assert np.allclose(ham.coulomb(dimer_rhf, half()), np.eye(2), atol=1e-15)
    assert np.allclose(ham.exchange(dimer_rhf, half()), np.eye(2), atol=1e-15)
    assert np.allclose(ham.g_matrix(dimer_rhf, half()), np.eye(2), atol=1e-15)
    assert np.allclose(ham.fock(dimer_rhf, half()), [[1, -1], [-1, 1]], atol=1e-15)


def test_spinless_dimer_g_vanishes_for_site_diagonal_density(dimer_spinless):
    for D in (np.diag([1.0, 0.0]), np.diag([0.0, 1.0]), np.diag([0.3, 0.7])):
        assert np.array_equal(ham.g_matrix(dimer_spinless, D), np.zeros((2, 2)))
        assert np.array_equal(ham.fock(dimer_spinless, D), dimer_spinless.h)


def test_zero_interaction(rng):
    system = ham.random_system(1, 4, 2, interaction_scale=0.0)
    assert not np.any(system.eri.packed)
    D = sym(rng.standard_normal((4, 4)))
    assert not np.any(ham.coulomb(system, D))
    assert not np.any(ham.exchange(system, D))
    assert not np.any(ham.g_matrix(system, D))
    assert np.array_equal(ham.fock(system, D), system.h)


def test_dimension_mismatch():
    system = ham.hubbard_ring(3, 1.0, 1.0, 2)
    with pytest.raises(DimensionError):
        ham.coulomb(system, np.eye(2))


@pytest.mark.parametrize("convention", ["spinless", "rhf"])
def test_linearity_and_adjoint_symmetry(rng, convention):
    system = ham.random_system(5, 5, 2, convention)
    A, B = (sym(rng.standard_normal((5, 5))) for _ in range(2))
    a, b = 0.7, -1.3
    for op in (ham.coulomb, ham.exchange, ham.g_matrix):
        lhs = op(system, a * A + b * B)
        assert np.allclose(lhs, a * op(system, A) + b * op(system, B), atol=1e-12)
    for op in (ham.coulomb, ham.exchange):
        assert frobenius_inner(op(system, A), B) == pytest.approx(frobenius_inner(op(system, B), A), abs=1e-12)


# --- energies --------------------------------------------------------------


def test_dimer_energies(dimer_spinless, dimer_rhf):
    assert ham.energy(dimer_spinless, half()) == pytest.approx(-1.0, abs=1e-15)
    assert ham.energy(dimer_rhf, half()) == pytest.approx(-1.0, abs=1e-15)


@pytest.mark.parametrize("convention,f", [("spinless", 1), ("rhf", 2)])
def test_linear_energy(rng, convention, f):
    system = ham.random_system(2, 5, 4, convention, interaction_scale=0.0)
    D = random_density(rng, 5, system.n_occ)
    assert ham.energy(system, D) == pytest.approx(f * np.trace(system.h @ D.matrix), abs=1e-13)


def test_energy_rejects_non_projector(dimer_rhf):
    with pytest.raises(ManifoldError):
        ham.energy(dimer_rhf, np.diag([0.5, 0.5]))


@pytest.mark.parametrize("convention", ["spinless", "rhf"])
def test_bilinear_identities(rng, convention):
    system = ham.random_system(8, 6, 4, convention)
    system = ham.ElectronicSystem(system.h, system.eri, 4, convention, core_energy=0.75)
    D = random_density(rng, 6, system.n_occ)
    D2 = random_density(rng, 6, system.n_occ)
    assert ham.bilinear_energy(system, D, D2) == pytest.approx(ham.bilinear_energy(system, D2, D), abs=1e-12)
    assert ham.bilinear_energy(system, D, D) == pytest.approx(2 * ham.energy(system, D), abs=1e-12)
    assert ham.shifted_bilinear_energy(system, D, D, 3.0) == pytest.approx(2 * ham.energy(system, D), abs=1e-12)
    assert ham.shifted_bilinear_energy(system, D, D2, 0.0) == ham.bilinear_energy(system, D, D2)
    assert ham.shifted_bilinear_energy(system, D, D2, 2.5) == pytest.approx(
        ham.shifted_bilinear_energy(system, D2, D, 2.5), abs=1e-12
    )


def test_bilinear_without_interaction(rng):
    system = ham.ElectronicSystem(np.diag([1.0, 2.0, 3.0]), EriTensor.zeros(3), 2, "rhf", core_energy=0.5)
    D = random_density(rng, 3, 1)
    D2 = random_density(rng, 3, 1)
    expected = 2 * np.trace(system.h @ (D.matrix + D2.matrix)) + 1.0
    assert ham.bilinear_energy(system, D, D2) == pytest.approx(expected, abs=1e-13)


@pytest.mark.parametrize("convention", ["spinless", "rhf"])
def test_unconstrained_gradient_is_f_times_fock(rng, convention):
    system = ham.random_system(11, 6, 2, convention)
    D = random_density(rng, 6, system.n_occ).matrix
    S = sym(rng.standard_normal((6, 6)))
    eps = 1e-5
    fd = (ham.energy_unchecked(system, D + eps * S) - ham.energy_unchecked(system, D - eps * S)) / (2 * eps)
    exact = system.factor * frobenius_inner(ham.fock(system, D), S)
    assert abs(fd - exact) <= 1e-5 * abs(exact)


def test_energy_change_matches_direct_difference(rng):
    system = ham.random_system(4, 5, 2)
    D = random_density(rng, 5, 2)
    D2 = random_density(rng, 5, 2)
    direct = ham.energy(system, D2) - ham.energy(system, D)
    assert ham.energy_difference(system, D, D2) == pytest.approx(direct, abs=1e-13)


def test_shifted_fock_examples(rng):
    system = ham.ElectronicSystem(np.diag([1.0, 2.0]), EriTensor.zeros(2), 1)
    D = np.diag([1.0, 0.0])
    assert np.array_equal(ham.shifted_fock(system, D, 3.0), [[-2.0, 0.0], [0.0, 2.0]])
    assert np.array_equal(ham.shifted_fock(system, D, 0.0), ham.fock(system, D))
    with pytest.raises(ValueError):
        ham.shifted_fock(system, D, -1.0)


def test_shift_preserves_aufbau_fixed_point(dimer_rhf):
    D = aufbau(ham.fock(dimer_rhf, half()), 1)
    for b in (0.5, 1.0, 10.0, 1e3):
        assert np.allclose(aufbau(ham.shifted_fock(dimer_rhf, D, b), 1).matrix, D.matrix, atol=1e-12)


# --- generators ------------------------------------------------------------


def test_hubbard_ring_structure():
    dimer = ham.hubbard_ring(2, 1.0, 2.0, 2)
    assert np.array_equal(dimer.h, [[0.0, -1.0], [-1.0, 0.0]])
    ring = ham.hubbard_ring(4, 1.0, 3.0, 4)
    oracle = sorted(-2 * np.cos(2 * np.pi * np.arange(4) / 4))
    assert np.allclose(np.linalg.eigvalsh(ring.h), oracle, atol=1e-14)
    assert np.allclose(oracle, [-2, 0, 0, 2], atol=1e-14)
    assert ring.kinetic is None and ring.nuclear_charge is None and ring.core_energy == 0.0
    nonzero = ring.eri.entries()
    assert nonzero == [(i, i, i, i, 3.0) for i in range(4)]


def test_hubbard_ring_rejects_bad_parameters():
    with pytest.raises(ValueError):
        ham.hubbard_ring(3, 0.0, 1.0, 2)
    with pytest.raises(ValueError):
        ham.hubbard_ring(3, 1.0, 1.0, 3, "rhf")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 7))
def test_random_system_is_deterministic(seed, n):
    a = ham.random_system(seed, n, 1)
    b = ham.random_system(seed, n, 1)
    assert a == b
    assert np.array_equal(a.eri.packed, b.eri.packed)
    assert np.all(np.abs(a.h) <= 1.0)
    assert np.array_equal(a.h, a.h.T)


def test_system_validation():
    with pytest.raises(ValueError):
        ham.ElectronicSystem(np.eye(2), EriTensor.zeros(2), 3)
    with pytest.raises(DimensionError):
        ham.ElectronicSystem(np.eye(2), EriTensor.zeros(3), 1)
    assert ham.ElectronicSystem(np.eye(4), EriTensor.zeros(4), 4, "rhf").n_occ == 2


def test_convention_parse():
    assert ham.Convention.parse("RHF") is ham.Convention.RHF
    assert ham.Convention.parse("restricted-closed-shell") is ham.Convention.RHF
    assert ham.Convention.parse("spinless").factor == 1
    with pytest.raises(ValueError):
        ham.Convention.parse("uhf")


def test_conjugate_system_preserves_energy(rng):
    system = ham.random_system(6, 4, 2)
    Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    rotated = ham.conjugate_system(system, Q)
    D = random_density(rng, 4, 2)
    DQ = Q @ D.matrix @ Q.T
    assert ham.energy(rotated, DQ) == pytest.approx(ham.energy(system, D), abs=1e-12)
    dense = system.eri.dense
    for i, j, k, l in itertools.islice(canonical_quads(4), 0, None, 7):
        oracle = np.einsum("p,q,r,s,pqrs->", Q[i], Q[j], Q[k], Q[l], dense)
        assert rotated.eri[i, j, k, l] == pytest.approx(oracle, abs=1e-12)
