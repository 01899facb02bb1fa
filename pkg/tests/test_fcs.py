from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgespin.exact_diag import correlation_from_vector
from edgespin.fcs import (
    FCSTriple,
    TransferOperator,
    TripleError,
    build_aklt_triple,
    build_custom_triple,
    build_spin_triple,
    expectation,
    fixed_point_state,
    is_minimal,
    product_triple,
    string_order,
    theta,
    transfer_map,
    transfer_product,
    twisted_fixed_point_residual,
    two_point,
    unvec,
    vec,
)
from edgespin.group_rep import cg_isometry, direct_sum_generators, spin_matrices, tensor_generators

from oracles import aklt_transfer, capped_aklt_ground_state

AKLT = build_aklt_triple()
HALF = Fraction(1, 2)


def random_operator(rng, d):
    return rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))


def singlet_product_triple():
    h = spin_matrices(HALF)
    singlet = np.array([0, 1, -1, 0]) / np.sqrt(2)
    return product_triple(tensor_generators(h, h), singlet)


def mixed_triple(angle, phase):
    """Spin-1 ⊕ spin-0 physical site with spin-1/2 auxiliary space."""
    c1, c0 = np.cos(angle), np.sin(angle) * np.exp(1j * phase)
    V = np.vstack([c1 * cg_isometry(1, HALF, HALF), c0 * cg_isometry(0, HALF, HALF)])
    phys = direct_sum_generators(spin_matrices(1), spin_matrices(0))
    return build_custom_triple(V, phys, spin_matrices(HALF))


def test_aklt_isometry_and_dimensions():
    assert (AKLT.d, AKLT.k) == (3, 2)
    assert np.max(np.abs(AKLT.V.conj().T @ AKLT.V - np.eye(2))) < 1e-14


def test_aklt_gap_matches_textbook_transfer_matrix():
    # eigenvalues of sum_m A^m ⊗ conj(A^m) from the textbook AKLT matrices
    ref = np.sort(np.linalg.eigvals(aklt_transfer()).real)
    assert np.allclose(ref, [-1 / 3, -1 / 3, -1 / 3, 1], atol=1e-12)
    ours = np.sort(transfer_map(AKLT, np.eye(3)).eigenvalues().real)
    assert np.allclose(ours, ref, atol=1e-10)
    assert abs(AKLT.lambda_e - 1 / 3) < 1e-10


def test_aklt_fixed_point_is_maximally_mixed():
    assert np.max(np.abs(AKLT.rho - np.eye(2) / 2)) < 1e-12


def test_custom_build_reproduces_aklt():
    t = build_custom_triple(cg_isometry(1, HALF, HALF), spin_matrices(1), spin_matrices(HALF))
    assert np.array_equal(t.V, AKLT.V)
    assert np.allclose(t.rho, AKLT.rho) and abs(t.lambda_e - AKLT.lambda_e) < 1e-14


def test_product_state_triple():
    t = singlet_product_triple()
    assert t.k == 1 and t.lambda_e == 0.0
    assert np.allclose(t.rho, [[1.0]])


def test_spin_two_with_spin_one_auxiliary():
    t = build_spin_triple(2, 1)
    assert (t.d, t.k) == (5, 3)
    blocks = t.V.reshape(5, 3, 3)
    brute = sum(np.kron(b, b.conj()) for b in blocks)
    ev = np.sort(np.abs(np.linalg.eigvals(brute)))[::-1]
    assert abs(ev[0] - 1) < 1e-12
    assert abs(t.lambda_e - ev[1]) < 1e-10
    assert 0 < t.lambda_e < 1


def test_non_isometry_rejected():
    with pytest.raises(TripleError):
        build_custom_triple(2 * cg_isometry(1, HALF, HALF), spin_matrices(1), spin_matrices(HALF))


def test_intertwining_violation_rejected():
    V = cg_isometry(1, HALF, HALF)
    perm = np.kron(np.eye(3)[[1, 0, 2]], np.eye(2))
    with pytest.raises(TripleError, match="intertwining"):
        build_custom_triple(perm @ V, spin_matrices(1), spin_matrices(HALF))


def test_degenerate_peripheral_spectrum_rejected():
    # two decoupled classical branches: E_1 has eigenvalue 1 twice
    z2 = np.zeros((2, 2))
    V = np.zeros((4, 2))
    V[0, 0] = 1
    V[3, 1] = 1
    with pytest.raises(TripleError, match="multiplicity"):
        build_custom_triple(V, (z2, z2, z2), (z2, z2, z2))


def test_transfer_identity_is_unital():
    E1 = transfer_map(AKLT, np.eye(3))
    assert np.allclose(E1(np.eye(2)), np.eye(2), atol=1e-14)


@pytest.mark.parametrize("g", [0.3, -1.2, 2.5])
def test_intertwining_in_transfer_form(g):
    E = transfer_map(AKLT, AKLT.U(g))
    assert np.max(np.abs(E(AKLT.u(g)) - AKLT.u(g))) < 1e-12


def test_sz_expectation_vanishes():
    assert abs(np.trace(AKLT.rho @ transfer_map(AKLT, AKLT.phys_gen.sz)(np.eye(2)))) < 1e-14
    assert abs(expectation(AKLT, [AKLT.phys_gen.sz])) < 1e-14


def test_transfer_shape_mismatch():
    with pytest.raises(ValueError):
        transfer_map(AKLT, np.eye(2))
    with pytest.raises(ValueError):
        expectation(AKLT, [np.eye(2)])


def test_vectorization_is_column_stacking():
    b = np.arange(4.0).reshape(2, 2)
    assert np.array_equal(vec(b), [0, 2, 1, 3])
    assert np.array_equal(unvec(vec(b), 2), b)


def test_fixed_point_of_product_state_is_scalar():
    rho, lam = fixed_point_state(TransferOperator(np.array([[1.0 + 0j]])))
    assert rho.shape == (1, 1) and rho[0, 0] == 1 and lam == 0


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 1.4), st.floats(0, 2 * np.pi))
def test_randomized_symmetric_fixed_point(angle, phase):
    t = mixed_triple(angle, phase)
    E1 = transfer_map(t, np.eye(t.d)).matrix
    r = vec(t.rho.T)
    assert np.linalg.norm(E1.T @ r - r) <= 1e-10
    assert np.max(np.abs(t.rho - np.eye(2) / 2)) < 1e-10
    for g in (0.4, -2.0):
        assert twisted_fixed_point_residual(t, g) < 1e-10


def test_all_identity_expectation_is_one():
    assert abs(expectation(AKLT, [np.eye(3)] * 5) - 1) < 1e-14


def test_two_point_sign_and_decay():
    sz = AKLT.phys_gen.sz
    vals = np.array([two_point(AKLT, sz, sz, r).real for r in range(1, 12)])
    signs = np.sign(vals)
    assert np.all(signs == (-1) ** np.arange(1, 12))
    ratios = vals[1:] / vals[:-1]
    assert np.allclose(ratios, -1 / 3, atol=1e-12)


def test_two_point_matches_capped_chain_ed():
    spec, psi = capped_aklt_ground_state(10)
    sz, sx = AKLT.phys_gen.sz, AKLT.phys_gen.sx
    for A, B, x, y in [(sz, sz, 3, 5), (sx, sx, 2, 6), (sz, sz, 4, 5)]:
        ed = correlation_from_vector(spec, psi, {x: A, y: B})
        assert abs(two_point(AKLT, A, B, y - x) - ed) < 1e-6


def test_exponential_clustering_rate():
    rng = np.random.default_rng(5)
    A = random_operator(rng, 3)
    B = random_operator(rng, 3)
    ca = expectation(AKLT, [A.conj().T])
    cb = expectation(AKLT, [B])
    r = np.arange(2, 14)
    conn = np.array([abs(two_point(AKLT, A.conj().T, B, k) - ca * cb) for k in r])
    slope = np.polyfit(r, np.log(conn), 1)[0]
    assert abs(slope - np.log(AKLT.lambda_e)) <= 0.02 * abs(np.log(AKLT.lambda_e))


def test_complete_positivity():
    rng = np.random.default_rng(11)
    X = random_operator(rng, 3)
    E = transfer_map(AKLT, X @ X.conj().T)
    for _ in range(50):
        Y = random_operator(rng, 2)
        out = E(Y @ Y.conj().T)
        assert np.linalg.eigvalsh((out + out.conj().T) / 2).min() >= -1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(-np.pi, np.pi), st.integers(0, 2**32 - 1), st.sampled_from(["x", "y", "z"]), st.integers(1, 2))
def test_gauge_invariance_of_state(g, seed, axis, n_sites):
    rng = np.random.default_rng(seed)
    A = random_operator(rng, 3**n_sites)
    lhs = expectation(AKLT, [theta(AKLT, A, g, axis)])
    assert abs(lhs - expectation(AKLT, [A])) < 1e-10


def test_transfer_composition_is_two_site_transfer():
    rng = np.random.default_rng(2)
    A, B = random_operator(rng, 3), random_operator(rng, 3)
    two = transfer_map(AKLT, np.kron(A, B)).matrix
    assert np.max(np.abs(transfer_product(AKLT, [A, B]).matrix - two)) < 1e-13


def test_json_round_trip_is_bit_faithful():
    for t in (AKLT, build_spin_triple(2, 1), singlet_product_triple()):
        back = FCSTriple.from_json(t.to_json())
        assert np.array_equal(back.V, t.V)
        assert np.array_equal(back.rho, t.rho)
        assert back.lambda_e == t.lambda_e
        assert np.array_equal(back.aux_gen.sz, t.aux_gen.sz)


def _textbook_string(n):
    """(-1)^n omega(S^z e^{iπ S^z}... S^z) from the textbook matrices."""
    Ez = aklt_transfer({1: 1, 0: 0, -1: -1})
    Epi = aklt_transfer({1: -1, 0: 1, -1: -1})
    left = np.eye(2).reshape(-1) / 2
    right = np.eye(2).reshape(-1)
    return (-1) ** n * (left @ Ez @ np.linalg.matrix_power(Epi, n - 1) @ Ez @ right).real


def test_string_order_limit():
    # the (-1)^{y-x} prefactor alternates the converged value; even separations give -4/9
    for n in (38, 40):
        assert abs(string_order(AKLT, 0, n) - _textbook_string(n)) < 1e-12
    assert abs(string_order(AKLT, 0, 40) + 4 / 9) < 1e-8
    assert abs(string_order(AKLT, 0, 41) - 4 / 9) < 1e-8


def test_string_order_matches_capped_chain_ed():
    spec, psi = capped_aklt_ground_state(10)
    sz = AKLT.phys_gen.sz
    flip = AKLT.phys_gen.unitary(np.pi, "z")
    for x, y in [(2, 6), (3, 6), (1, 8)]:
        ops = {x: sz, y: sz}
        ops.update({j: flip for j in range(x + 1, y)})
        ed = (-1) ** (y - x) * correlation_from_vector(spec, psi, ops).real
        assert abs(string_order(AKLT, x, y) - ed) < 1e-6


def test_string_order_without_string_is_two_point():
    sz = AKLT.phys_gen.sz
    assert abs(string_order(AKLT, 0, 1) + two_point(AKLT, sz, sz, 1).real) < 1e-14


def test_string_order_vanishes_for_product_state():
    t = singlet_product_triple()
    for n in (2, 3, 7):
        assert abs(string_order(t, 0, n)) < 1e-14


def test_string_order_needs_ordered_sites():
    with pytest.raises(ValueError):
        string_order(AKLT, 3, 3)


def test_minimality():
    assert is_minimal(AKLT)
    assert is_minimal(build_spin_triple(2, 1))
