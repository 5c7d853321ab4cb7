"""Hamiltonians as weighted sums of ladder products, with the
Tavis-Cummings builder and its conserved excitation number.

Tavis-Cummings layout: site i occupies fermionic modes 2i (lower level,
"-") and 2i+1 (upper level, "+"); the basis is filtered to exactly one
fermion per site.  A single boson mode couples the sites:

    H = omega_b b+b + sum_i [ omega_f a+_{i+} a_{i+}
                              + g_c (a+_{i+} a_{i-} b + a+_{i-} a_{i+} b+) ]
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .fock import FockBasis, StateVector, build_basis, popcount_u64
from .operators import GammaOp, SparseOperator, to_matrix

HERMITICITY_TOL = 1e-12


class HamiltonianSpec:
    """Hermitian operator defined by (coefficient, GammaOp) terms.

    Terms with identical index signatures are merged by coefficient
    addition (exact zeros dropped); the matrix realization is built once
    and validated to be Hermitian.
    """

    def __init__(self, basis: FockBasis, terms):
        merged: dict[GammaOp, complex] = {}
        for coeff, op in terms:
            if not isinstance(op, GammaOp):
                raise ValidationError("terms must be (coefficient, GammaOp) pairs")
            merged[op] = merged.get(op, 0.0) + complex(coeff)
        self.basis = basis
        self.terms = tuple((c, op) for op, c in merged.items() if c != 0.0)

        mat = None
        for coeff, op in self.terms:
            piece = coeff * to_matrix(op, basis)
            mat = piece if mat is None else mat + piece
        if mat is None:
            mat = SparseOperator(basis, np.zeros((basis.dim, basis.dim)))
        resid = _herm_residual(mat)
        if resid > HERMITICITY_TOL * max(1.0, mat.fro_norm()):
            raise ValidationError(
                f"term list is not Hermitian: ||H - H^dagger|| = {resid:.3e}"
            )
        self.matrix = mat
        self._term_mats = None

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix.apply(x)

    def term_matrices(self):
        """(coefficient, operator) realization of each term, cached."""
        if self._term_mats is None:
            self._term_mats = [(c, to_matrix(op, self.basis)) for c, op in self.terms]
        return self._term_mats

    def energy(self, psi: StateVector) -> float:
        """<psi|H|psi> for a normalized state."""
        self._check_state(psi)
        x = psi.amplitudes
        val = np.vdot(x, self.matrix.apply(x))
        return float(val.real)

    def variance(self, psi: StateVector) -> float:
        """<H^2> - <H>^2, clamped to 0 when within rounding of zero."""
        self._check_state(psi)
        x = psi.amplitudes
        hx = self.matrix.apply(x)
        h2 = float(np.vdot(hx, hx).real)
        e = float(np.vdot(x, hx).real)
        var = h2 - e * e
        if var < 0.0:
            if var < -1e-12:
                raise NumericalError(f"variance evaluated to {var:.3e} < -1e-12")
            var = 0.0
        return var

    def _check_state(self, psi: StateVector) -> None:
        if psi.basis is not self.basis and psi.basis != self.basis:
            raise ValidationError("state and Hamiltonian live on different bases")

    def content_hash(self) -> str:
        """Stable hash of the term list plus basis shape (provenance)."""
        h = hashlib.sha256()
        h.update(
            f"{self.basis.n_fermion_modes};{self.basis.n_max};{self.basis.n_boson_modes};"
            f"{self.basis.n_admitted}".encode()
        )
        for coeff, op in sorted(
            self.terms,
            key=lambda t: (
                t[1].fermion_create,
                t[1].fermion_annihilate,
                t[1].boson_create,
                t[1].boson_annihilate,
            ),
        ):
            h.update(
                f"{coeff.real:.17g},{coeff.imag:.17g}:{op.fermion_create}"
                f"{op.fermion_annihilate}{op.boson_create}{op.boson_annihilate}".encode()
            )
        return h.hexdigest()[:16]


def _herm_residual(mat: SparseOperator) -> float:
    diff = mat.matrix - mat.matrix.getH()
    return float(np.sqrt((np.abs(diff.data) ** 2).sum())) if diff.nnz else 0.0


def build_hamiltonian(basis: FockBasis, terms) -> HamiltonianSpec:
    return HamiltonianSpec(basis, terms)


# -- Tavis-Cummings -------------------------------------------------------


@dataclass(frozen=True)
class TcParams:
    """Tavis-Cummings model parameters (dimensionless energy units)."""

    n_sites: int
    omega_b: float
    omega_f: float
    g_c: float
    n_max: int

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValidationError("n_sites must be >= 1")
        if self.n_max < 1:
            raise ValidationError("n_max must be >= 1 (coupling needs boson space)")
        for name in ("omega_b", "omega_f", "g_c"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValidationError(f"{name} must be finite")

    def replace_g(self, g_c: float) -> "TcParams":
        return TcParams(self.n_sites, self.omega_b, self.omega_f, float(g_c), self.n_max)


def one_fermion_per_site(n_sites: int):
    """Occupation predicate: exactly one fermion in each site's mode pair."""

    def pred(occ):
        occ = np.asarray(occ, dtype=np.uint64)
        ok = np.ones(occ.shape, dtype=bool)
        for i in range(n_sites):
            lo = (occ >> np.uint64(2 * i)) & np.uint64(1)
            hi = (occ >> np.uint64(2 * i + 1)) & np.uint64(1)
            ok &= (lo ^ hi) == 1
        return ok

    return pred


def tc_basis(params: TcParams) -> FockBasis:
    return build_basis(
        2 * params.n_sites, params.n_max, occ_filter=one_fermion_per_site(params.n_sites)
    )


def build_tavis_cummings(params: TcParams, basis: FockBasis | None = None) -> HamiltonianSpec:
    if basis is None:
        basis = tc_basis(params)
    terms = [(params.omega_b, GammaOp(boson_create=(0,), boson_annihilate=(0,)))]
    for i in range(params.n_sites):
        lo, hi = 2 * i, 2 * i + 1
        terms.append((params.omega_f, GammaOp(fermion_create=(hi,), fermion_annihilate=(hi,))))
        terms.append(
            (params.g_c, GammaOp(fermion_create=(hi,), fermion_annihilate=(lo,), boson_annihilate=(0,)))
        )
        terms.append(
            (params.g_c, GammaOp(fermion_create=(lo,), fermion_annihilate=(hi,), boson_create=(0,)))
        )
    return HamiltonianSpec(basis, terms)


def excitation_number(basis: FockBasis, n_sites: int) -> SparseOperator:
    """M = b+b + sum_i a+_{i+} a_{i+}; commutes with the TC Hamiltonian."""
    mat = to_matrix(GammaOp(boson_create=(0,), boson_annihilate=(0,)), basis)
    for i in range(n_sites):
        hi = 2 * i + 1
        mat = mat + to_matrix(GammaOp(fermion_create=(hi,), fermion_annihilate=(hi,)), basis)
    return mat


def sector_labels(basis: FockBasis, n_sites: int) -> np.ndarray:
    """Integer excitation number of every basis state (TC layout)."""
    upper_mask = np.uint64(sum(1 << (2 * i + 1) for i in range(n_sites)))
    n_up = popcount_u64(basis.admitted & upper_mask)
    n_b = basis._boson_occ.sum(axis=1)
    return (n_b[:, None] + n_up[None, :]).ravel().astype(np.int64)


def site_lower_populations(psi: StateVector, n_sites: int) -> np.ndarray:
    """<a+_{i-} a_{i-}> per site (diagonal in the occupation basis)."""
    basis = psi.basis
    probs = np.abs(psi.amplitudes) ** 2
    pops = np.empty(n_sites, dtype=np.float64)
    for i in range(n_sites):
        bit = np.uint64(1 << (2 * i))
        occupied = (basis.admitted & bit) != 0
        mask = np.tile(occupied, basis.n_boson_states)
        pops[i] = float(probs[mask].sum())
    return pops


# -- structured text import/export ----------------------------------------
#
# One term per line:
#   coeff_re coeff_im | create_f: i.. | annih_f: k.. | create_b: j.. | annih_b: l..
# Blank lines and lines starting with '#' are skipped on read.

_SECTIONS = ("create_f", "annih_f", "create_b", "annih_b")


def format_term(coeff: complex, op: GammaOp) -> str:
    fields = [f"{coeff.real:.17g} {coeff.imag:.17g}"]
    for label, idx in zip(
        _SECTIONS,
        (op.fermion_create, op.fermion_annihilate, op.boson_create, op.boson_annihilate),
    ):
        body = " ".join(str(i) for i in idx)
        fields.append(f"{label}:" + (f" {body}" if body else ""))
    return " | ".join(fields)


def parse_term(line: str):
    parts = [p.strip() for p in line.split("|")]
    if len(parts) != 5:
        raise ValidationError(f"malformed term line (expected 5 '|' fields): {line!r}")
    head = parts[0].split()
    if len(head) != 2:
        raise ValidationError(f"malformed coefficient field: {parts[0]!r}")
    coeff = complex(float(head[0]), float(head[1]))
    lists = []
    for section, label in zip(parts[1:], _SECTIONS):
        if not section.startswith(label + ":"):
            raise ValidationError(f"expected section {label!r}, got {section!r}")
        body = section[len(label) + 1 :].split()
        lists.append(tuple(int(tok) for tok in body))
    return coeff, GammaOp(*lists)


def save_terms(h: HamiltonianSpec, path) -> None:
    with open(path, "w", newline="") as fh:
        for coeff, op in h.terms:
            fh.write(format_term(coeff, op) + "\n")


def load_terms(path, basis: FockBasis) -> HamiltonianSpec:
    terms = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            terms.append(parse_term(line))
    return HamiltonianSpec(basis, terms)
