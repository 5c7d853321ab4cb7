# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: CSR matvec and scaled-Taylor exponential action.

Semantics match fbcqe._core_py exactly; fbcqe.kernels selects between the
two at import time.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, sqrt

cnp.import_array()


cdef inline void _csr_mv(const double complex[::1] data,
                         const int[::1] indices,
                         const int[::1] indptr,
                         const double complex[::1] x,
                         double complex[::1] out,
                         Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double complex acc
    for i in range(n):
        acc = 0
        for j in range(indptr[i], indptr[i + 1]):
            acc = acc + data[j] * x[indices[j]]
        out[i] = acc


def csr_matvec(const double complex[::1] data,
               const int[::1] indices,
               const int[::1] indptr,
               const double complex[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    out_arr = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    _csr_mv(data, indices, indptr, x, out, n)
    return out_arr


def expmv_taylor(const double complex[::1] data,
                 const int[::1] indices,
                 const int[::1] indptr,
                 double eta,
                 const double complex[::1] x,
                 int n_substeps,
                 double tol_sub,
                 int max_terms):
    """exp(eta*A) applied to a unit vector; returns (y, log_norm, ok, last_inc)."""
    cdef Py_ssize_t n = x.shape[0]
    cdef double theta = eta / n_substeps

    y_arr = np.array(x, dtype=np.complex128, copy=True)
    acc_arr = np.empty(n, dtype=np.complex128)
    term_arr = np.empty(n, dtype=np.complex128)
    tmp_arr = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] y = y_arr
    cdef double complex[::1] acc = acc_arr
    cdef double complex[::1] term = term_arr
    cdef double complex[::1] tmp = tmp_arr

    cdef Py_ssize_t i, s
    cdef int k
    cdef double log_norm = 0.0
    cdef double inc = 0.0, nrm2, nrm, scale
    cdef bint converged

    with nogil:
        for s in range(n_substeps):
            for i in range(n):
                acc[i] = y[i]
                term[i] = y[i]
            converged = False
            for k in range(1, max_terms + 1):
                _csr_mv(data, indices, indptr, term, tmp, n)
                scale = theta / k
                nrm2 = 0.0
                for i in range(n):
                    term[i] = tmp[i] * scale
                    acc[i] = acc[i] + term[i]
                    nrm2 += term[i].real * term[i].real + term[i].imag * term[i].imag
                inc = sqrt(nrm2)
                if inc <= tol_sub:
                    converged = True
                    break
            if not converged:
                with gil:
                    return y_arr, log_norm, False, inc
            nrm2 = 0.0
            for i in range(n):
                nrm2 += acc[i].real * acc[i].real + acc[i].imag * acc[i].imag
            nrm = sqrt(nrm2)
            if nrm <= 0.0 or nrm != nrm:
                with gil:
                    return y_arr, log_norm, False, inc
            for i in range(n):
                y[i] = acc[i] / nrm
            log_norm += log(nrm)

    return y_arr, log_norm, True, 0.0
