"""Kernel dispatch: compiled extension if available, pure numpy otherwise.

Set FBCQE_PURE_PYTHON=1 to force the fallback (used by the benchmark and
the equivalence tests).  The compiled path wants CSR arrays with int32
indices; the pure path accepts CSR or dense operands.
"""

import math
import os

import numpy as np
import scipy.sparse as sp

from . import _core_py
from .errors import NumericalError

_FORCE_PURE = os.environ.get("FBCQE_PURE_PYTHON", "").strip().lower() in {
    "1",
    "true",
    "yes",
    "on",
}

_core = None
if not _FORCE_PURE:
    try:
        from . import _core  # type: ignore[attr-defined]
    except ImportError:
        _core = None

HAVE_COMPILED = _core is not None
BACKEND = "compiled" if HAVE_COMPILED else "python"

MAX_SUBSTEPS = 1_000_000


def _csr_parts(mat):
    data = np.ascontiguousarray(mat.data, dtype=np.complex128)
    indices = np.ascontiguousarray(mat.indices, dtype=np.int32)
    indptr = np.ascontiguousarray(mat.indptr, dtype=np.int32)
    return data, indices, indptr


def matvec(rep, x: np.ndarray) -> np.ndarray:
    if HAVE_COMPILED and sp.issparse(rep):
        data, indices, indptr = _csr_parts(rep)
        return _core.csr_matvec(data, indices, indptr, np.ascontiguousarray(x))
    return rep @ x


def substep_count(eta: float, onenorm: float) -> int:
    """Number of series substeps so each factor has argument norm <= 1."""
    work = abs(eta) * onenorm
    if not math.isfinite(work):
        raise NumericalError("non-finite operator norm in exponential action")
    m = max(1, int(math.ceil(work)))
    if m > MAX_SUBSTEPS:
        raise NumericalError(
            f"exponential action needs {m} substeps (|eta|*|A| = {work:.3g}); refusing"
        )
    return m


def expmv(rep, eta: float, x: np.ndarray, tol: float, onenorm: float, max_terms: int = 200):
    """Unit-norm direction of exp(eta*rep) @ x plus log of the norm change.

    ``x`` must be a unit vector; ``onenorm`` an upper bound on the spectral
    norm of ``rep`` (the induced 1-norm works for the (anti-)Hermitian
    operators used here).
    """
    m = substep_count(eta, onenorm)
    tol_sub = max(tol / m, 1e-15)
    if HAVE_COMPILED and sp.issparse(rep):
        data, indices, indptr = _csr_parts(rep)
        y, log_norm, ok, last_inc = _core.expmv_taylor(
            data, indices, indptr, float(eta), np.ascontiguousarray(x), m, tol_sub, max_terms
        )
    else:
        y, log_norm, ok, last_inc = _core_py.expmv_taylor(
            rep, float(eta), x, m, tol_sub, max_terms
        )
    if not ok:
        raise NumericalError(
            f"exponential series did not converge within {max_terms} terms "
            f"(last increment norm {last_inc:.3e})"
        )
    return y, log_norm
