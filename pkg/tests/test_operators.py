import numpy as np
import pytest
import scipy.linalg

from conftest import random_gamma, random_hermitian_hamiltonian, random_state
from fbcqe.errors import NumericalError, ValidationError
from fbcqe.fock import StateVector, build_basis
from fbcqe.operators import (
    GammaOp,
    adjoint,
    anticommutator_expect,
    apply_exp,
    apply_gamma,
    commutator_expect,
    identity_operator,
    to_matrix,
)


def dense(op, basis):
    return to_matrix(op, basis).toarray()


def a_dag(i):
    return GammaOp(fermion_create=(i,))


def a_(i):
    return GammaOp(fermion_annihilate=(i,))


B_DAG = GammaOp(boson_create=(0,))
B_ = GammaOp(boson_annihilate=(0,))
NUM_B = GammaOp(boson_create=(0,), boson_annihilate=(0,))


def test_rejects_repeated_fermion_index():
    with pytest.raises(ValidationError):
        GammaOp(fermion_create=(1, 1))
    with pytest.raises(ValidationError):
        GammaOp(fermion_annihilate=(0, 0))


def test_rejects_out_of_range_mode():
    basis = build_basis(2, 1)
    with pytest.raises(ValidationError):
        apply_gamma(a_dag(5), basis.unit_state(0))
    with pytest.raises(ValidationError):
        apply_gamma(GammaOp(boson_create=(1,)), basis.unit_state(0))


def test_boson_number_operator():
    basis = build_basis(1, 3)
    psi = basis.state_from_occupation(0, 2)
    out = apply_gamma(NUM_B, psi)
    assert out.amplitudes[basis.index_of(0, 2)] == pytest.approx(2.0, abs=1e-14)


def test_boson_ladder_values():
    basis = build_basis(1, 3)
    for n in range(4):
        psi = basis.state_from_occupation(0, n)
        up = apply_gamma(B_DAG, psi)
        if n < 3:
            assert up.amplitudes[basis.index_of(0, n + 1)] == pytest.approx(np.sqrt(n + 1))
        else:
            assert up.norm() == 0.0  # truncation projector
        down = apply_gamma(B_, psi)
        if n > 0:
            assert down.amplitudes[basis.index_of(0, n - 1)] == pytest.approx(np.sqrt(n))
        else:
            assert down.norm() == 0.0


def test_pair_ladder_diagonal():
    # <n| b+ b+ b b |n> = n (n - 1), exactly representable
    basis = build_basis(1, 5)
    op = GammaOp(boson_create=(0, 0), boson_annihilate=(0, 0))
    for n in range(6):
        psi = basis.state_from_occupation(0, n)
        val = np.vdot(psi.amplitudes, apply_gamma(op, psi).amplitudes).real
        assert val == float(n * (n - 1))


def test_fermion_parity_sign():
    basis = build_basis(2, 0)
    # a+_1 a_0 moves the particle from mode 0 to mode 1 with + sign here
    psi = basis.state_from_occupation(0b01, 0)
    out = apply_gamma(GammaOp(fermion_create=(1,), fermion_annihilate=(0,)), psi)
    assert out.amplitudes[basis.index_of(0b10, 0)] == pytest.approx(1.0)


def test_fermion_nilpotency():
    basis = build_basis(2, 0)
    for occ in range(4):
        psi = basis.state_from_occupation(occ, 0)
        once = apply_gamma(a_dag(1), psi)
        twice = apply_gamma(a_dag(1), once) if once.norm() else once
        assert twice.norm() == 0.0


def test_identity_matrix():
    basis = build_basis(2, 1)
    assert np.array_equal(dense(GammaOp(), basis), np.eye(basis.dim))


def test_single_boson_matrix_entry():
    basis = build_basis(1, 1, occ_filter=lambda occ: occ == 0)
    mat = dense(B_, basis)
    want = np.zeros((2, 2))
    want[0, 1] = 1.0
    assert np.array_equal(mat, want)


def test_matrix_columns_match_apply():
    basis = build_basis(3, 2)
    rng = np.random.default_rng(5)
    for _ in range(10):
        op = random_gamma(rng, 3)
        mat = dense(op, basis)
        for p in range(0, basis.dim, 7):
            col = apply_gamma(op, basis.unit_state(p)).amplitudes
            assert np.array_equal(mat[:, p], col)


def test_canonical_anticommutation():
    for n_f in (2, 3, 4):
        basis = build_basis(n_f, 0)
        ident = np.eye(basis.dim)
        for p in range(n_f):
            for q in range(n_f):
                ap = dense(a_(p), basis)
                aqd = dense(a_dag(q), basis)
                anti = ap @ aqd + aqd @ ap
                target = ident if p == q else 0.0 * ident
                assert np.abs(anti - target).max() <= 1e-12
                aq = dense(a_(q), basis)
                assert np.abs(ap @ aq + aq @ ap).max() <= 1e-12


def test_truncated_boson_commutator():
    for n_max in (1, 3, 5):
        basis = build_basis(1, n_max, occ_filter=lambda occ: occ == 0)
        b = dense(B_, basis)
        bd = dense(B_DAG, basis)
        comm = b @ bd - bd @ b
        want = np.eye(n_max + 1, dtype=complex)
        want[n_max, n_max] = -float(n_max)  # 1 - (n_max + 1)
        assert np.abs(comm - want).max() <= 1e-12


def test_adjoint_swaps_lists():
    op = GammaOp(fermion_create=(1,), fermion_annihilate=(0,), boson_annihilate=(0,))
    adj = adjoint(op)
    assert adj == GammaOp(fermion_create=(0,), fermion_annihilate=(1,), boson_create=(0,))
    assert adjoint(GammaOp()) == GammaOp()


def test_adjoint_matrix_coherence():
    basis = build_basis(3, 2)
    rng = np.random.default_rng(11)
    for _ in range(20):
        op = random_gamma(rng, 3)
        lhs = dense(adjoint(op), basis)
        rhs = dense(op, basis).conj().T
        assert np.abs(lhs - rhs).max() <= 1e-12


def test_filter_projection_semantics():
    # an operator leaving the filtered subspace maps to zero
    basis = build_basis(2, 0, occ_filter=lambda occ: occ != 3)
    psi = basis.state_from_occupation(0b01, 0)
    out = apply_gamma(a_dag(1), psi)  # would give |11> which is filtered out
    assert out.norm() == 0.0


def test_commutator_expect_identity_and_eigenstate():
    basis = build_basis(2, 2)
    rng = np.random.default_rng(7)
    h = random_hermitian_hamiltonian(rng, basis)
    vals, vecs = np.linalg.eigh(h.matrix.toarray())
    eig = StateVector(basis, vecs[:, 0])
    for _ in range(5):
        op = random_gamma(rng, 2)
        assert abs(commutator_expect(op, h, eig)) <= 1e-10
    psi = random_state(rng, basis)
    assert abs(commutator_expect(GammaOp(), h, psi)) <= 1e-12


def test_expectations_match_dense_oracle():
    basis = build_basis(2, 2)
    rng = np.random.default_rng(13)
    h = random_hermitian_hamiltonian(rng, basis)
    hd = h.matrix.toarray()
    psi = random_state(rng, basis)
    x = psi.amplitudes
    e = float(np.real(np.vdot(x, hd @ x)))
    for _ in range(10):
        op = random_gamma(rng, 2)
        gd = dense(op, basis)
        comm_want = np.vdot(x, (gd @ hd - hd @ gd) @ x)
        acom_want = np.vdot(x, (gd @ (hd - e * np.eye(basis.dim))
                                + (hd - e * np.eye(basis.dim)) @ gd) @ x)
        assert commutator_expect(op, h, psi) == pytest.approx(comm_want, abs=1e-10)
        assert anticommutator_expect(op, h, e, psi) == pytest.approx(acom_want, abs=1e-10)


def test_expectation_adjoint_symmetries():
    basis = build_basis(2, 2)
    rng = np.random.default_rng(17)
    h = random_hermitian_hamiltonian(rng, basis)
    psi = random_state(rng, basis)
    e = float(np.real(np.vdot(psi.amplitudes, h.apply(psi.amplitudes))))
    for _ in range(8):
        op = random_gamma(rng, 2)
        c = commutator_expect(op, h, psi)
        c_adj = commutator_expect(adjoint(op), h, psi)
        assert c_adj == pytest.approx(-np.conj(c), abs=1e-10)
        b = anticommutator_expect(op, h, e, psi)
        b_adj = anticommutator_expect(adjoint(op), h, e, psi)
        assert b_adj == pytest.approx(np.conj(b), abs=1e-10)


# -- exponential action -----------------------------------------------------


def test_apply_exp_zero_eta():
    basis = build_basis(2, 1)
    psi = basis.unit_state(3)
    out = apply_exp(identity_operator(basis), 0.0, psi)
    assert np.array_equal(out.amplitudes, psi.amplitudes)


def test_apply_exp_diagonal_oracle():
    # X = b+b on (|0> + |1>)/sqrt(2): amplitudes prop. to (1, e)
    basis = build_basis(1, 1, occ_filter=lambda occ: occ == 0)
    num = to_matrix(NUM_B, basis)
    amps = np.array([1.0, 1.0]) / np.sqrt(2.0)
    out = apply_exp(num, 1.0, StateVector(basis, amps), tol=1e-13)
    want = np.array([1.0, np.e])
    want = want / np.linalg.norm(want)
    assert np.allclose(out.amplitudes, want, atol=1e-12)


def test_apply_exp_unitary_norm_and_reversal():
    basis = build_basis(2, 2)
    rng = np.random.default_rng(23)
    op = random_gamma(rng, 2)
    g = to_matrix(op, basis)
    x_anti = g - g.adjoint()
    psi = random_state(rng, basis)
    for eta in rng.uniform(-1.0, 1.0, size=4):
        fwd = apply_exp(x_anti, float(eta), psi, tol=1e-12)
        assert fwd.norm() == pytest.approx(1.0, abs=1e-12)
        back = apply_exp(x_anti, -float(eta), fwd, tol=1e-12)
        assert np.linalg.norm(back.amplitudes - psi.amplitudes) <= 1e-8


def test_apply_exp_matches_scipy_expm():
    basis = build_basis(2, 2)
    rng = np.random.default_rng(29)
    for _ in range(5):
        op = random_gamma(rng, 2)
        g = to_matrix(op, basis)
        x = g + g.adjoint()  # Hermitian, non-unitary flow
        psi = random_state(rng, basis)
        eta = float(rng.uniform(-0.8, 0.8))
        got = apply_exp(x, eta, psi, tol=1e-13)
        want = scipy.linalg.expm(eta * x.toarray()) @ psi.amplitudes
        want = want / np.linalg.norm(want)
        assert np.abs(got.amplitudes - want).max() <= 1e-10


def test_apply_exp_error_contracts():
    basis = build_basis(2, 1)
    num = to_matrix(NUM_B, basis)
    psi = basis.state_from_occupation(0b00, 1)
    with pytest.raises(ValidationError):
        apply_exp(num, 1.0, psi, tol=0.0)
    with pytest.raises(NumericalError):
        apply_exp(num, 1.0, psi, tol=1e-13, max_terms=2)
