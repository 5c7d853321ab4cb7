"""Normal-ordered ladder products on the mixed Fock space.

A GammaOp encodes the operator string

    a+_{i1} ... a+_{iq}  a_{kr} ... a_{k1}  b+_{j1} ... b+_{js}  b_{lt} ... b_{l1}

which acts right-to-left, one elementary operator at a time.  Fermionic
operators carry the parity sign (-1)^(occupied modes below the acted
index); bosonic ladder operators follow b|n> = sqrt(n)|n-1> and
b+|n> = sqrt(n+1)|n+1>, with b+ at the truncation ceiling yielding the
zero vector (projector semantics).  A string that maps an admitted
occupation outside the basis filter is likewise projected to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import NumericalError, ValidationError
from .fock import FockBasis, StateVector, popcount_u64

# Pure-python kernel path applies small operators as dense arrays.
DENSE_APPLY_CAP = 512

_ONE = np.uint64(1)


@dataclass(frozen=True)
class GammaOp:
    """Normal-ordered product of ladder operators, identified by index lists.

    Boson lists hold mode indices; a repeated index raises that mode's
    ladder power.  A repeated index inside either fermion list would make
    the operator identically zero and is rejected.
    """

    fermion_create: tuple = ()
    fermion_annihilate: tuple = ()
    boson_create: tuple = ()
    boson_annihilate: tuple = ()

    def __post_init__(self):
        for name in ("fermion_create", "fermion_annihilate", "boson_create", "boson_annihilate"):
            raw = getattr(self, name)
            idx = tuple(int(i) for i in raw)
            if any(i < 0 for i in idx):
                raise ValidationError(f"{name} contains a negative mode index")
            object.__setattr__(self, name, idx)
        for name in ("fermion_create", "fermion_annihilate"):
            idx = getattr(self, name)
            if len(set(idx)) != len(idx):
                raise ValidationError(
                    f"repeated fermionic index in {name}: the operator is identically zero"
                )

    @property
    def is_identity(self) -> bool:
        return not (
            self.fermion_create
            or self.fermion_annihilate
            or self.boson_create
            or self.boson_annihilate
        )

    def adjoint(self) -> "GammaOp":
        """Conjugate-transpose partner: creation and annihilation lists swap."""
        return GammaOp(
            fermion_create=self.fermion_annihilate,
            fermion_annihilate=self.fermion_create,
            boson_create=self.boson_annihilate,
            boson_annihilate=self.boson_create,
        )

    def __str__(self) -> str:
        parts = []
        parts += [f"a+{i}" for i in self.fermion_create]
        parts += [f"a{k}" for k in reversed(self.fermion_annihilate)]
        parts += [f"b+{j}" for j in self.boson_create]
        parts += [f"b{l}" for l in reversed(self.boson_annihilate)]
        return "[" + " ".join(parts) + "]" if parts else "[1]"


def adjoint(op: GammaOp) -> GammaOp:
    return op.adjoint()


def _check_mode_ranges(op: GammaOp, basis: FockBasis) -> None:
    f_top = basis.n_fermion_modes
    b_top = basis.n_boson_modes
    if any(i >= f_top for i in op.fermion_create + op.fermion_annihilate):
        raise ValidationError(f"fermionic mode index out of range (F={f_top})")
    if any(j >= b_top for j in op.boson_create + op.boson_annihilate):
        raise ValidationError(f"boson mode index out of range ({b_top} modes)")


def _fermion_maps(basis: FockBasis, create: tuple, annihilate: tuple):
    """Rank-to-rank map and parity signs of the fermionic string.

    Returns (ranks, signs): ranks[r] is the target rank for source rank r
    (-1 when annihilated or projected out of the filtered basis).
    """
    occ = basis.admitted.astype(np.uint64, copy=True)
    alive = np.ones(occ.shape, dtype=bool)
    signs = np.ones(occ.shape, dtype=np.float64)

    def parity_flip(bit):
        par = popcount_u64(occ & (bit - _ONE))
        np.multiply(signs, np.where(par & 1, -1.0, 1.0), out=signs)

    # Rightmost-first: annihilators in list order, then creators reversed.
    for k in annihilate:
        bit = _ONE << np.uint64(k)
        present = (occ & bit) != 0
        alive &= present
        parity_flip(bit)
        occ = np.where(present, occ & ~bit, occ)
    for i in reversed(create):
        bit = _ONE << np.uint64(i)
        free = (occ & bit) == 0
        alive &= free
        parity_flip(bit)
        occ = np.where(free, occ | bit, occ)

    pos = np.searchsorted(basis.admitted, occ)
    pos = np.minimum(pos, basis.n_admitted - 1)
    alive &= basis.admitted[pos] == occ
    ranks = np.where(alive, pos, -1).astype(np.int64)
    signs[~alive] = 0.0
    return ranks, signs


def _boson_maps(basis: FockBasis, create: tuple, annihilate: tuple):
    """Flat-index map and sqrt factors of the bosonic string.

    The integer product of ladder factors is accumulated under a single
    square root, so e.g. number-operator strings come out exactly.
    """
    ns = basis._boson_occ.astype(np.int64, copy=True)
    prod = np.ones(ns.shape[0], dtype=np.int64)
    alive = np.ones(ns.shape[0], dtype=bool)

    for l in annihilate:
        prod *= np.maximum(ns[:, l], 0)
        ns[:, l] -= 1
        alive &= ns[:, l] >= 0
    for j in reversed(create):
        ns[:, j] += 1
        alive &= ns[:, j] <= basis.n_max
        prod *= np.maximum(ns[:, j], 0)
    factors = np.sqrt(prod.astype(np.float64))

    radix = basis.n_max + 1
    flat = np.zeros(ns.shape[0], dtype=np.int64)
    for m in range(basis.n_boson_modes):
        flat = flat * radix + np.clip(ns[:, m], 0, basis.n_max)
    targets = np.where(alive, flat, -1)
    factors[~alive] = 0.0
    return targets, factors


def gamma_action(op: GammaOp, basis: FockBasis):
    """Per-source-index (target, factor) arrays of a GammaOp on a basis.

    The action of a single ladder string is a weighted partial injection:
    each basis state maps to at most one basis state.
    """
    _check_mode_ranges(op, basis)
    f_ranks, f_signs = _fermion_maps(basis, op.fermion_create, op.fermion_annihilate)
    b_targets, b_factors = _boson_maps(basis, op.boson_create, op.boson_annihilate)

    na = basis.n_admitted
    ok = (b_targets[:, None] >= 0) & (f_ranks[None, :] >= 0)
    targets = np.where(ok, b_targets[:, None] * na + f_ranks[None, :], -1)
    factors = b_factors[:, None] * f_signs[None, :]
    return targets.ravel(), factors.ravel()


def apply_gamma(op: GammaOp, psi: StateVector) -> StateVector:
    """Unnormalized image of |psi> under the ladder string."""
    targets, factors = gamma_action(op, psi.basis)
    out = np.zeros(psi.basis.dim, dtype=np.complex128)
    src = np.nonzero(targets >= 0)[0]
    out[targets[src]] = factors[src] * psi.amplitudes[src]
    return StateVector(psi.basis, out)


def to_matrix(op: GammaOp, basis: FockBasis) -> "SparseOperator":
    """Sparse matrix realization; column p equals the image of basis state p."""
    targets, factors = gamma_action(op, basis)
    src = np.nonzero((targets >= 0) & (factors != 0.0))[0]
    mat = sp.csr_matrix(
        (factors[src].astype(np.complex128), (targets[src], src)),
        shape=(basis.dim, basis.dim),
    )
    return SparseOperator(basis, mat)


class SparseOperator:
    """Immutable sparse operator bound to a basis."""

    def __init__(self, basis: FockBasis, matrix):
        if sp.issparse(matrix):
            mat = matrix.tocsr().astype(np.complex128)  # astype copies
        else:
            mat = sp.csr_matrix(np.asarray(matrix, dtype=np.complex128))
        if mat.shape != (basis.dim, basis.dim):
            raise ValidationError(
                f"matrix shape {mat.shape} does not match basis dim {basis.dim}"
            )
        mat.sum_duplicates()
        mat.sort_indices()
        self.basis = basis
        self.matrix = mat
        self._dense = None
        self._onenorm = None
        self._herm = None
        self._herm_defect = 0.0

    # -- representations -------------------------------------------------

    def _apply_rep(self):
        if kernels.HAVE_COMPILED or self.basis.dim > DENSE_APPLY_CAP:
            return self.matrix
        if self._dense is None:
            self._dense = self.matrix.toarray()
        return self._dense

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    @property
    def onenorm(self) -> float:
        if self._onenorm is None:
            if self.matrix.nnz == 0:
                self._onenorm = 0.0
            else:
                self._onenorm = float(np.abs(self.matrix).sum(axis=0).max())
        return self._onenorm

    def fro_norm(self) -> float:
        return float(np.sqrt((np.abs(self.matrix.data) ** 2).sum()))

    def hermiticity(self, tol: float = 1e-12) -> str:
        """'hermitian', 'antihermitian', or 'general' (relative tolerance)."""
        if self._herm is None:
            ref = max(1.0, self.fro_norm())
            adj = self.matrix.getH()
            d_h = _spnorm(self.matrix - adj)
            d_a = _spnorm(self.matrix + adj)
            if d_h <= tol * ref:
                self._herm = "hermitian"
                self._herm_defect = d_h
            elif d_a <= tol * ref:
                self._herm = "antihermitian"
                self._herm_defect = d_a
            else:
                self._herm = "general"
                self._herm_defect = 0.0
        return self._herm

    @property
    def hermiticity_defect(self) -> float:
        """Residual norm left over by the hermiticity classification."""
        self.hermiticity()
        return self._herm_defect

    # -- algebra ----------------------------------------------------------

    def apply(self, x: np.ndarray) -> np.ndarray:
        return kernels.matvec(self._apply_rep(), x)

    def apply_state(self, psi: StateVector) -> StateVector:
        if psi.basis is not self.basis and psi.basis != self.basis:
            raise ValidationError("state and operator live on different bases")
        return StateVector(self.basis, self.apply(psi.amplitudes))

    def adjoint(self) -> "SparseOperator":
        return SparseOperator(self.basis, self.matrix.getH())

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        return SparseOperator(self.basis, self.matrix + other.matrix)

    def __sub__(self, other: "SparseOperator") -> "SparseOperator":
        return SparseOperator(self.basis, self.matrix - other.matrix)

    def __mul__(self, scalar) -> "SparseOperator":
        if isinstance(scalar, SparseOperator):
            raise TypeError("use @ for operator products")
        return SparseOperator(self.basis, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "SparseOperator":
        return SparseOperator(self.basis, -self.matrix)

    def __matmul__(self, other: "SparseOperator") -> "SparseOperator":
        return SparseOperator(self.basis, self.matrix @ other.matrix)


def _spnorm(mat) -> float:
    return float(np.sqrt((np.abs(mat.data) ** 2).sum())) if mat.nnz else 0.0


def identity_operator(basis: FockBasis) -> SparseOperator:
    return SparseOperator(basis, sp.identity(basis.dim, dtype=np.complex128, format="csr"))


# -- operator expressions fed to the measurement backend ------------------


class MatrixAction:
    """O = M."""

    def __init__(self, op: SparseOperator):
        self.op = op

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.op.apply(x)


class SquaredAction:
    """O = M @ M."""

    def __init__(self, op: SparseOperator):
        self.op = op

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.op.apply(self.op.apply(x))


class ProductAction:
    """O = A @ B."""

    def __init__(self, a_op: SparseOperator, b_op: SparseOperator):
        self.a_op = a_op
        self.b_op = b_op

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.a_op.apply(self.b_op.apply(x))


class CommutatorAction:
    """O = G H - H G for Hermitian H.

    ``hx`` may carry a precomputed H @ x for the one vector this action
    will be applied to (residual loops share it across the pool).
    """

    def __init__(self, g: SparseOperator, h: SparseOperator, hx: np.ndarray | None = None):
        self.g = g
        self.h = h
        self.hx = hx

    def apply(self, x: np.ndarray) -> np.ndarray:
        hx = self.hx if self.hx is not None else self.h.apply(x)
        return self.g.apply(hx) - self.h.apply(self.g.apply(x))


class AnticommutatorAction:
    """O = G (H - E) + (H - E) G for Hermitian H and scalar E.

    ``hx`` as in CommutatorAction.
    """

    def __init__(
        self,
        g: SparseOperator,
        h: SparseOperator,
        e_shift: float,
        hx: np.ndarray | None = None,
    ):
        self.g = g
        self.h = h
        self.e_shift = float(e_shift)
        self.hx = hx

    def apply(self, x: np.ndarray) -> np.ndarray:
        gx = self.g.apply(x)
        hx = self.hx if self.hx is not None else self.h.apply(x)
        return self.g.apply(hx) + self.h.apply(gx) - 2.0 * self.e_shift * gx


# -- expectation helpers (exact arithmetic; the sampled path lives in
#    fbcqe.measurement) ----------------------------------------------------


def commutator_expect(op: GammaOp, hamiltonian, psi: StateVector) -> complex:
    """<psi| [Gamma, H] |psi> via operator-on-vector products."""
    gmat = to_matrix(op, psi.basis)
    return commutator_expect_mat(gmat, hamiltonian.matrix, psi)


def commutator_expect_mat(gmat: SparseOperator, hmat: SparseOperator, psi: StateVector) -> complex:
    x = psi.amplitudes
    hx = hmat.apply(x)
    # <x|G H x> - <H x|G x> uses H = H^dagger.
    return complex(np.vdot(x, gmat.apply(hx)) - np.vdot(hx, gmat.apply(x)))


def anticommutator_expect(op: GammaOp, hamiltonian, energy: float, psi: StateVector) -> complex:
    """<psi| {Gamma, H - E} |psi> via operator-on-vector products."""
    gmat = to_matrix(op, psi.basis)
    return anticommutator_expect_mat(gmat, hamiltonian.matrix, energy, psi)


def anticommutator_expect_mat(
    gmat: SparseOperator, hmat: SparseOperator, energy: float, psi: StateVector
) -> complex:
    x = psi.amplitudes
    gx = gmat.apply(x)
    hx = hmat.apply(x)
    return complex(
        np.vdot(x, gmat.apply(hx)) + np.vdot(hx, gx) - 2.0 * energy * np.vdot(x, gx)
    )


def apply_exp(
    x_op: SparseOperator,
    eta: float,
    psi: StateVector,
    tol: float = 1e-12,
    max_terms: int = 200,
) -> StateVector:
    """Normalized exp(eta * X) |psi> by scaled Taylor series.

    For anti-Hermitian X the pre-normalization norm must stay within
    10*tol of 1 (unitarity check); a violation raises NumericalError.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if psi.basis is not x_op.basis and psi.basis != x_op.basis:
        raise ValidationError("state and operator live on different bases")
    nrm = psi.norm()
    if nrm < 1e-150:
        raise ValidationError("cannot exponentiate onto a zero vector")
    vec = psi.amplitudes / nrm
    if eta == 0.0:
        return StateVector(psi.basis, vec)

    y, log_norm = kernels.expmv(x_op._apply_rep(), eta, vec, tol, x_op.onenorm, max_terms)
    if x_op.hermiticity() == "antihermitian":
        # The classification leaves a tiny symmetric part that drifts the
        # norm by |eta|*defect; series rounding adds O(eps) per substep.
        allowed = 10.0 * tol + abs(eta) * x_op.hermiticity_defect + (
            kernels.substep_count(eta, x_op.onenorm) * 2e-13
        )
        drift = abs(math.expm1(log_norm))
        if drift > allowed:
            raise NumericalError(
                f"unitary exponential drifted by {drift:.3e} (allowed {allowed:.1e})"
            )
    out = y / np.linalg.norm(y)
    return StateVector(psi.basis, out)
