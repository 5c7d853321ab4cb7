"""Eigensolver library for mixed fermion-boson Hamiltonians.

Trial states are driven to eigenstates by measuring contracted residuals
of the Hamiltonian's own ladder products and exponentiating the resulting
anti-Hermitian and Hermitian operators; a dense diagonalization oracle
and a Tavis-Cummings model builder support validation at desk scale.
"""

from .cqe import (
    CqeConfig,
    CqePool,
    CqeTrace,
    build_pool,
    line_search,
    residual_a,
    residual_b,
    save_trace,
    solve,
    tc_initial_state,
)
from .errors import FbcqeError, NumericalError, ValidationError
from .exact import Crossing, Spectrum, diagonalize, find_crossing, find_crossings, ground_populations
from .fock import FockBasis, StateVector, build_basis, inner, norm, normalize
from .hamiltonian import (
    HamiltonianSpec,
    TcParams,
    build_hamiltonian,
    build_tavis_cummings,
    excitation_number,
    load_terms,
    one_fermion_per_site,
    save_terms,
    sector_labels,
    site_lower_populations,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .kernels import HAVE_COMPILED
from .measurement import DEFAULT_SHOTS, Backend, derive_seed
from .operators import (
    GammaOp,
    SparseOperator,
    adjoint,
    anticommutator_expect,
    apply_exp,
    apply_gamma,
    commutator_expect,
    to_matrix,
)

__version__ = "0.1.0"
