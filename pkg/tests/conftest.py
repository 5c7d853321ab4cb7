import numpy as np

from fbcqe.fock import StateVector, build_basis, normalize
from fbcqe.hamiltonian import HamiltonianSpec
from fbcqe.operators import GammaOp


def random_gamma(rng, n_fermion_modes, n_boson_modes=1, max_f=2, max_b=2) -> GammaOp:
    """Random ladder product with valid (repeat-free) fermion lists."""
    def f_list():
        k = int(rng.integers(0, max_f + 1))
        return tuple(rng.choice(n_fermion_modes, size=k, replace=False).tolist())

    def b_list():
        k = int(rng.integers(0, max_b + 1))
        return tuple(rng.integers(0, n_boson_modes, size=k).tolist())

    while True:
        op = GammaOp(f_list(), f_list(), b_list(), b_list())
        if not op.is_identity:
            return op


def random_hermitian_hamiltonian(rng, basis, n_ops=4) -> HamiltonianSpec:
    """Random Hermitian term list: every op paired with its adjoint."""
    terms = []
    for _ in range(n_ops):
        op = random_gamma(rng, basis.n_fermion_modes, basis.n_boson_modes)
        coeff = complex(rng.normal(), rng.normal())
        if op.adjoint() == op:
            terms.append((complex(coeff.real), op))
        else:
            terms.append((coeff, op))
            terms.append((coeff.conjugate(), op.adjoint()))
    return HamiltonianSpec(basis, terms)


def random_state(rng, basis) -> StateVector:
    amps = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    return normalize(StateVector(basis, amps))
