"""Dense exact-diagonalization oracle: reference spectra, populations,
and ground-sector level-crossing location by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalError, ValidationError
from .fock import StateVector
from .hamiltonian import (
    HamiltonianSpec,
    TcParams,
    build_tavis_cummings,
    sector_labels,
    site_lower_populations,
)

DENSE_CAP = 4096
RESIDUAL_TOL = 1e-9
ORTHO_TOL = 1e-10
DEGENERACY_TOL = 1e-9


@dataclass
class Spectrum:
    """Lowest eigenpairs of a Hamiltonian, ascending."""

    energies: np.ndarray
    states: list
    provenance: dict = field(default_factory=dict)
    degenerate: np.ndarray = None

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def ground_state(self) -> StateVector:
        return self.states[0]


def diagonalize(h: HamiltonianSpec, k: int | None = None, dense_cap: int = DENSE_CAP) -> Spectrum:
    """k lowest eigenpairs by dense Hermitian diagonalization.

    Residuals and orthonormality are checked before returning; eigenvalues
    closer than 1e-9 to a neighbor are flagged degenerate (eigenvector
    content is convention-dependent there).
    """
    dim = h.basis.dim
    if dim > dense_cap:
        raise ValidationError(f"dimension {dim} exceeds dense solver cap {dense_cap}")
    if k is None:
        k = dim
    k = int(k)
    if not 1 <= k <= dim:
        raise ValidationError(f"k={k} outside [1, {dim}]")

    dense = h.matrix.toarray()
    all_vals, vecs = scipy.linalg.eigh(dense)
    vals = all_vals[:k]
    vecs = vecs[:, :k]

    for j in range(k):
        resid = np.linalg.norm(dense @ vecs[:, j] - vals[j] * vecs[:, j])
        if resid > RESIDUAL_TOL:
            raise NumericalError(f"eigenpair {j} residual {resid:.3e} exceeds {RESIDUAL_TOL}")
    gram = vecs.conj().T @ vecs
    if np.abs(gram - np.eye(k)).max() > ORTHO_TOL:
        raise NumericalError("eigenvectors are not orthonormal to tolerance")

    degenerate = np.zeros(k, dtype=bool)
    for j in range(k):
        gaps = np.abs(all_vals - vals[j])
        if np.sum(gaps < DEGENERACY_TOL) > 1:
            degenerate[j] = True

    states = [StateVector(h.basis, vecs[:, j].astype(np.complex128)) for j in range(k)]
    return Spectrum(
        energies=np.asarray(vals, dtype=np.float64),
        states=states,
        provenance={"hamiltonian": h.content_hash(), "n_max": h.basis.n_max, "dim": dim, "k": k},
        degenerate=degenerate,
    )


def ground_populations(spectrum: Spectrum, n_sites: int) -> np.ndarray:
    """Per-site lower-orbital populations of the ground state."""
    return site_lower_populations(spectrum.ground_state, n_sites)


def ground_sector(spectrum: Spectrum, n_sites: int) -> int:
    """Rounded excitation number of the ground state."""
    labels = sector_labels(spectrum.ground_state.basis, n_sites)
    m = float(labels @ (np.abs(spectrum.ground_state.amplitudes) ** 2))
    return int(round(m))


def _sector_at(params: TcParams, g: float, dense_cap: int) -> int:
    h = build_tavis_cummings(params.replace_g(g))
    spec = diagonalize(h, k=1, dense_cap=dense_cap)
    return ground_sector(spec, params.n_sites)


def find_crossing(
    params: TcParams,
    bracket: tuple,
    tol: float = 1e-6,
    dense_cap: int = DENSE_CAP,
) -> float:
    """Bisect on the ground-state sector label to locate a level crossing.

    The coupling in ``params`` is ignored; the bracket ends must carry
    different ground sectors.
    """
    g_lo, g_hi = float(bracket[0]), float(bracket[1])
    if not g_lo < g_hi:
        raise ValidationError("bracket must satisfy g_lo < g_hi")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    s_lo = _sector_at(params, g_lo, dense_cap)
    s_hi = _sector_at(params, g_hi, dense_cap)
    if s_lo == s_hi:
        raise ValidationError(
            f"no sector change in bracket: sector {s_lo} at both ends"
        )
    while g_hi - g_lo > tol:
        mid = 0.5 * (g_lo + g_hi)
        if _sector_at(params, mid, dense_cap) == s_lo:
            g_lo = mid
        else:
            g_hi = mid
    return 0.5 * (g_lo + g_hi)


@dataclass(frozen=True)
class Crossing:
    g: float
    sector_below: int
    sector_above: int


def find_crossings(
    params: TcParams,
    g_lo: float,
    g_hi: float,
    scan_points: int = 41,
    tol: float = 1e-6,
    dense_cap: int = DENSE_CAP,
) -> list:
    """Scan [g_lo, g_hi] for ground-sector changes and bisect each one."""
    if scan_points < 2 or not g_lo < g_hi:
        return []
    grid = np.linspace(g_lo, g_hi, scan_points)
    sectors = [_sector_at(params, g, dense_cap) for g in grid]
    out = []
    for a, b, s_a, s_b in zip(grid[:-1], grid[1:], sectors[:-1], sectors[1:]):
        if s_a != s_b:
            g_star = find_crossing(params, (a, b), tol=tol, dense_cap=dense_cap)
            out.append(Crossing(g=g_star, sector_below=s_a, sector_above=s_b))
    return out
