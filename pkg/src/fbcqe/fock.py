"""Truncated mixed fermion-boson Fock space and state vectors.

A basis state is a fermionic occupation bitstring (F modes, mode 0 =
least significant bit) tensored with truncated boson number states
(each boson mode holds 0..n_max quanta).  Flat indices are boson-major:

    index = boson_flat * n_admitted + fermion_rank

where ``fermion_rank`` is the position of the occupation among the
admitted occupations sorted as integers, and ``boson_flat`` encodes the
boson numbers in mixed radix with mode 0 most significant.  With a
single boson mode ``boson_flat`` is just the boson number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError

# Hard ceiling on the flat dimension; everything here is desk scale.
DIM_CAP = 1 << 22
MAX_FERMION_MODES = 22

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


def popcount_u64(arr: np.ndarray) -> np.ndarray:
    """Vectorized population count for uint64 arrays (SWAR)."""
    x = arr.astype(np.uint64, copy=True)
    x -= (x >> np.uint64(1)) & _M1
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return ((x * _H01) >> np.uint64(56)).astype(np.int64)


class FockBasis:
    """Immutable enumeration of admitted fermion occupations x boson numbers.

    Parameters
    ----------
    n_fermion_modes:
        Number F of fermionic modes, 1 <= F <= 22.
    n_max:
        Boson truncation: each boson mode holds at most n_max quanta.
    occ_filter:
        Optional predicate over occupation bitmasks.  It is called with a
        uint64 array of all 2^F occupations and must return a boolean
        array (scalar callables are applied elementwise as a fallback).
    n_boson_modes:
        Number of boson modes sharing the same truncation (default 1).
    """

    def __init__(
        self,
        n_fermion_modes: int,
        n_max: int,
        occ_filter: Optional[Callable] = None,
        n_boson_modes: int = 1,
        dim_cap: int = DIM_CAP,
    ):
        if n_fermion_modes < 1:
            raise ValidationError("need at least one fermionic mode")
        if n_fermion_modes > MAX_FERMION_MODES:
            raise ValidationError(
                f"n_fermion_modes={n_fermion_modes} exceeds cap {MAX_FERMION_MODES}"
            )
        if n_max < 0:
            raise ValidationError("n_max must be >= 0")
        if n_boson_modes < 1:
            raise ValidationError("need at least one boson mode")

        self.n_fermion_modes = int(n_fermion_modes)
        self.n_max = int(n_max)
        self.n_boson_modes = int(n_boson_modes)

        all_occs = np.arange(1 << n_fermion_modes, dtype=np.uint64)
        if occ_filter is None:
            admitted = all_occs
        else:
            try:
                mask = np.asarray(occ_filter(all_occs), dtype=bool)
                if mask.shape != all_occs.shape:
                    raise TypeError
            except (TypeError, ValueError):
                mask = np.fromiter(
                    (bool(occ_filter(int(o))) for o in all_occs),
                    dtype=bool,
                    count=all_occs.size,
                )
            admitted = all_occs[mask]
        if admitted.size == 0:
            raise ValidationError("occupation filter excludes every state")

        self.admitted = admitted
        self.admitted.setflags(write=False)
        self.n_boson_states = (self.n_max + 1) ** self.n_boson_modes
        dim = int(admitted.size) * self.n_boson_states
        if dim > dim_cap:
            raise ValidationError(f"basis dimension {dim} exceeds cap {dim_cap}")
        self.dim = dim
        self._boson_occ = self._build_boson_table()
        self._boson_occ.setflags(write=False)

    def _build_boson_table(self) -> np.ndarray:
        """(n_boson_states, n_boson_modes) table of boson numbers per flat index."""
        k = self.n_boson_modes
        flat = np.arange(self.n_boson_states, dtype=np.int64)
        table = np.empty((self.n_boson_states, k), dtype=np.int64)
        radix = self.n_max + 1
        rem = flat
        for m in range(k - 1, -1, -1):
            table[:, m] = rem % radix
            rem = rem // radix
        return table

    @property
    def n_admitted(self) -> int:
        return int(self.admitted.size)

    def fermion_rank(self, occupation: int) -> int:
        """Rank of an admitted occupation; raises if filtered out."""
        occ = np.uint64(occupation)
        pos = int(np.searchsorted(self.admitted, occ))
        if pos >= self.n_admitted or self.admitted[pos] != occ:
            raise ValidationError(
                f"occupation {occupation:#b} is not admitted by the basis filter"
            )
        return pos

    def _boson_flat(self, n_boson) -> int:
        if self.n_boson_modes == 1 and np.isscalar(n_boson):
            ns = (int(n_boson),)
        else:
            ns = tuple(int(n) for n in np.atleast_1d(n_boson))
        if len(ns) != self.n_boson_modes:
            raise ValidationError(
                f"expected {self.n_boson_modes} boson numbers, got {len(ns)}"
            )
        flat = 0
        for n in ns:
            if not 0 <= n <= self.n_max:
                raise ValidationError(f"boson number {n} outside [0, {self.n_max}]")
            flat = flat * (self.n_max + 1) + n
        return flat

    def index_of(self, occupation: int, n_boson) -> int:
        """Flat index of |occupation> (x) |n_boson>."""
        return self._boson_flat(n_boson) * self.n_admitted + self.fermion_rank(occupation)

    def occupation_of(self, index: int):
        """Inverse of index_of; returns (occupation, n_boson)."""
        if not 0 <= index < self.dim:
            raise ValidationError(f"index {index} outside [0, {self.dim})")
        bflat, rank = divmod(int(index), self.n_admitted)
        occ = int(self.admitted[rank])
        if self.n_boson_modes == 1:
            return occ, int(self._boson_occ[bflat, 0])
        return occ, tuple(int(n) for n in self._boson_occ[bflat])

    def unit_state(self, index: int) -> "StateVector":
        amps = np.zeros(self.dim, dtype=np.complex128)
        amps[index] = 1.0
        return StateVector(self, amps)

    def state_from_occupation(self, occupation: int, n_boson) -> "StateVector":
        return self.unit_state(self.index_of(occupation, n_boson))

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, FockBasis):
            return NotImplemented
        return (
            self.n_fermion_modes == other.n_fermion_modes
            and self.n_max == other.n_max
            and self.n_boson_modes == other.n_boson_modes
            and np.array_equal(self.admitted, other.admitted)
        )

    def __hash__(self) -> int:
        return hash(
            (
                self.n_fermion_modes,
                self.n_max,
                self.n_boson_modes,
                self.admitted.tobytes(),
            )
        )

    def __repr__(self) -> str:
        return (
            f"FockBasis(F={self.n_fermion_modes}, n_max={self.n_max}, "
            f"boson_modes={self.n_boson_modes}, dim={self.dim})"
        )


def build_basis(
    n_fermion_modes: int,
    n_max: int,
    occ_filter: Optional[Callable] = None,
    n_boson_modes: int = 1,
    dim_cap: int = DIM_CAP,
) -> FockBasis:
    return FockBasis(n_fermion_modes, n_max, occ_filter, n_boson_modes, dim_cap)


@dataclass
class StateVector:
    """Complex amplitude vector over a FockBasis."""

    basis: FockBasis
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (self.basis.dim,):
            raise ValidationError(
                f"amplitude vector has shape {amps.shape}, basis dim is {self.basis.dim}"
            )
        self.amplitudes = amps

    def copy(self) -> "StateVector":
        return StateVector(self.basis, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        return normalize(self)


def _check_same_basis(a: StateVector, b: StateVector) -> None:
    if a.basis is not b.basis and a.basis != b.basis:
        raise ValidationError("state vectors live on different bases")


def inner(a: StateVector, b: StateVector) -> complex:
    """Sesquilinear inner product <a|b>, conjugate-linear in the first slot."""
    _check_same_basis(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def norm(a: StateVector) -> float:
    return a.norm()


def normalize(a: StateVector) -> StateVector:
    n = a.norm()
    if not np.isfinite(n) or n < 1e-150:
        raise ValidationError("cannot normalize a zero (or non-finite) vector")
    return StateVector(a.basis, a.amplitudes / n)
