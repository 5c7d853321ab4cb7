"""Pure numpy/scipy implementations of the hot kernels.

Mirrors the compiled extension in fbcqe._core; fbcqe.kernels picks one of
the two at import time.  ``mat`` may be a scipy CSR matrix or a dense
ndarray (callers hand over whichever representation applies faster).
"""

import math

import numpy as np


def matvec(mat, x: np.ndarray) -> np.ndarray:
    return mat @ x


def expmv_taylor(mat, eta: float, x: np.ndarray, n_substeps: int, tol_sub: float, max_terms: int):
    """Scaled Taylor evaluation of exp(eta * mat) applied to a unit vector.

    The argument is split into ``n_substeps`` factors so each series sees
    an operator of norm <= 1; the iterate is renormalized after every
    substep and the accumulated log-norm returned alongside the unit
    result.  Returns (y, log_norm, ok, last_increment).
    """
    theta = eta / n_substeps
    y = x.copy()
    log_norm = 0.0
    for _ in range(n_substeps):
        acc = y.copy()
        term = y
        converged = False
        inc = np.inf
        for k in range(1, max_terms + 1):
            term = (mat @ term) * (theta / k)
            acc = acc + term
            inc = float(np.linalg.norm(term))
            if inc <= tol_sub:
                converged = True
                break
        if not converged:
            return y, log_norm, False, inc
        nrm = float(np.linalg.norm(acc))
        if not np.isfinite(nrm) or nrm <= 0.0:
            return y, log_norm, False, inc
        y = acc / nrm
        log_norm += math.log(nrm)
    return y, log_norm, True, 0.0
