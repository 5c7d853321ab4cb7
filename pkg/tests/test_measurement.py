import numpy as np
import pytest

from conftest import random_state
from fbcqe.errors import ValidationError
from fbcqe.exact import diagonalize
from fbcqe.fock import StateVector, normalize
from fbcqe.hamiltonian import TcParams, build_tavis_cummings
from fbcqe.measurement import Backend, derive_seed
from fbcqe.operators import MatrixAction


@pytest.fixture(scope="module")
def tc_setup():
    params = TcParams(n_sites=1, omega_b=2.0, omega_f=0.5, g_c=0.6, n_max=3)
    h = build_tavis_cummings(params)
    rng = np.random.default_rng(99)
    psi = random_state(rng, h.basis)
    return h, psi


def test_backend_validation():
    with pytest.raises(ValidationError):
        Backend("sampled", shots=0, seed=1)
    with pytest.raises(ValidationError):
        Backend("sampled", shots=10)
    with pytest.raises(ValidationError):
        Backend("bogus")


def test_exact_mode_is_noiseless(tc_setup):
    h, psi = tc_setup
    be = Backend.exact()
    val = be.expect(MatrixAction(h.matrix), psi, real=True)
    assert val == pytest.approx(h.energy(psi), abs=1e-14)
    assert be.eval_count == 0


def test_determinism_same_seed(tc_setup):
    h, psi = tc_setup
    a = Backend.sampled(1000, seed=42)
    b = Backend.sampled(1000, seed=42)
    seq_a = [a.expect(MatrixAction(h.matrix), psi) for _ in range(5)]
    seq_b = [b.expect(MatrixAction(h.matrix), psi) for _ in range(5)]
    assert seq_a == seq_b
    assert a.eval_count == 5


def test_zero_variance_is_noise_free(tc_setup):
    h, _ = tc_setup
    eig = diagonalize(h, k=1).ground_state
    be = Backend.sampled(10, seed=7)
    val = be.expect(MatrixAction(h.matrix), eig, real=True)
    assert val == pytest.approx(h.energy(eig), abs=1e-12)


def test_large_shots_small_error(tc_setup):
    h, psi = tc_setup
    be = Backend.sampled(10**8, seed=5)
    val = be.expect(MatrixAction(h.matrix), psi, real=True)
    assert abs(val - h.energy(psi)) < 1e-3


def test_unbiasedness(tc_setup):
    h, psi = tc_setup
    exact_val = h.energy(psi)
    shots = 1000
    draws = np.array(
        [
            Backend.sampled(shots, seed=s).expect(MatrixAction(h.matrix), psi, real=True)
            for s in range(1000)
        ]
    )
    sigma = np.sqrt(h.variance(psi) / shots)
    assert abs(draws.mean() - exact_val) <= 3 * sigma / np.sqrt(len(draws))


def test_gaussian_variance_consistency(tc_setup):
    h, psi = tc_setup
    shots = 1000
    draws = np.array(
        [
            Backend.sampled(shots, seed=s).expect(MatrixAction(h.matrix), psi, real=True)
            for s in range(1000)
        ]
    )
    want = h.variance(psi) / shots
    assert draws.var() == pytest.approx(want, rel=0.2)


def test_complex_split_half_variance(tc_setup):
    h, psi = tc_setup
    gmat = h.term_matrices()[2][1]  # a non-Hermitian coupling term
    x = psi.amplitudes
    v = gmat.apply(x)
    exact_val = complex(np.vdot(x, v))
    var = float(np.vdot(v, v).real) - abs(exact_val) ** 2
    shots = 500
    draws = np.array(
        [
            Backend.sampled(shots, seed=s).expect(MatrixAction(gmat), psi)
            for s in range(2000)
        ]
    )
    assert draws.real.var() == pytest.approx(var / (2 * shots), rel=0.25)
    assert draws.imag.var() == pytest.approx(var / (2 * shots), rel=0.25)


def test_error_scaling_slope(tc_setup):
    h, psi = tc_setup
    exact_val = h.energy(psi)
    shot_grid = [100, 1000, 10_000, 100_000]
    means = []
    for shots in shot_grid:
        errs = [
            abs(
                Backend.sampled(shots, seed=s).expect(MatrixAction(h.matrix), psi, real=True)
                - exact_val
            )
            for s in range(100)
        ]
        means.append(np.mean(errs))
    slope = np.polyfit(np.log(shot_grid), np.log(means), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


def test_sampled_energy_uses_per_term_draws(tc_setup):
    h, psi = tc_setup
    be = Backend.sampled(1000, seed=3)
    be.energy(h, psi)
    assert be.eval_count == len(h.terms)


def test_derive_seed_stability():
    assert derive_seed(123, 0) == derive_seed(123, 0)
    assert derive_seed(123, 0) != derive_seed(123, 1)
    assert derive_seed(123, 0) != derive_seed(124, 0)


def test_derived_backend(tc_setup):
    h, psi = tc_setup
    a = Backend.derived("sampled", 100, root_seed=9, index=4)
    b = Backend.derived("sampled", 100, root_seed=9, index=4)
    assert a.expect(MatrixAction(h.matrix), psi) == b.expect(MatrixAction(h.matrix), psi)
    assert Backend.derived("exact", 0, root_seed=9, index=4).mode == "exact"
