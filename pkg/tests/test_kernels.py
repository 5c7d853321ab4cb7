import math
import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from fbcqe import _core_py, kernels


def random_csr(rng, dim, density=0.2, hermitian=False):
    mat = sp.random(dim, dim, density=density, random_state=np.random.RandomState(int(rng.integers(1 << 30))))
    mat = mat.astype(np.complex128)
    mat.data = mat.data + 1j * rng.normal(size=mat.data.shape)
    mat = mat.tocsr()
    if hermitian:
        mat = (mat + mat.getH()) * 0.5
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


@pytest.mark.skipif(not kernels.HAVE_COMPILED, reason="compiled core not built")
def test_compiled_matvec_matches_scipy():
    from fbcqe import _core

    rng = np.random.default_rng(1)
    for dim in (5, 40, 300):
        mat = random_csr(rng, dim)
        x = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        got = _core.csr_matvec(
            mat.data.astype(np.complex128),
            mat.indices.astype(np.int32),
            mat.indptr.astype(np.int32),
            np.ascontiguousarray(x),
        )
        assert np.abs(got - mat @ x).max() <= 1e-13


@pytest.mark.skipif(not kernels.HAVE_COMPILED, reason="compiled core not built")
def test_compiled_and_python_expmv_agree():
    from fbcqe import _core

    rng = np.random.default_rng(2)
    for dim in (8, 60):
        mat = random_csr(rng, dim, hermitian=True)
        x = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        x = x / np.linalg.norm(x)
        for eta in (0.3, -1.7):
            onenorm = float(np.abs(mat).sum(axis=0).max())
            m = kernels.substep_count(eta, onenorm)
            tol_sub = max(1e-12 / m, 1e-15)
            y_c, ln_c, ok_c, _ = _core.expmv_taylor(
                mat.data.astype(np.complex128),
                mat.indices.astype(np.int32),
                mat.indptr.astype(np.int32),
                eta,
                np.ascontiguousarray(x),
                m,
                tol_sub,
                200,
            )
            y_p, ln_p, ok_p, _ = _core_py.expmv_taylor(mat, eta, x, m, tol_sub, 200)
            assert ok_c and ok_p
            assert np.abs(y_c - y_p).max() <= 1e-12
            assert ln_c == pytest.approx(ln_p, abs=1e-12)


def test_python_expmv_against_dense_expm():
    rng = np.random.default_rng(3)
    dim = 24
    mat = random_csr(rng, dim, hermitian=True)
    x = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    x = x / np.linalg.norm(x)
    eta = 0.9
    y, log_norm = kernels.expmv(mat, eta, x, tol=1e-13, onenorm=float(np.abs(mat).sum(axis=0).max()))
    want = scipy.linalg.expm(eta * mat.toarray()) @ x
    nrm = np.linalg.norm(want)
    assert np.abs(y - want / nrm).max() <= 1e-11
    assert log_norm == pytest.approx(math.log(nrm), abs=1e-11)


def test_substep_count():
    assert kernels.substep_count(0.0, 123.0) == 1
    assert kernels.substep_count(2.0, 3.0) == 6
    with pytest.raises(Exception):
        kernels.substep_count(1e9, 1e9)


def test_pure_python_env_forces_fallback():
    code = (
        "import fbcqe.kernels as k; "
        "assert k.BACKEND == 'python' and not k.HAVE_COMPILED; print('ok')"
    )
    env = dict(os.environ, FBCQE_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "ok"


def test_backends_give_same_solver_result():
    # one small end-to-end solve must agree bitwise-closely across kernels
    code = """
import numpy as np
from fbcqe.cqe import CqeConfig, solve, tc_initial_state
from fbcqe.hamiltonian import TcParams, build_tavis_cummings, sector_labels
h = build_tavis_cummings(TcParams(1, 2.0, 0.5, 0.5, 3))
psi0 = tc_initial_state(h.basis, 1)
tr = solve(h, CqeConfig(initial_state=psi0, max_iters=40), sector_labels=sector_labels(h.basis, 1))
print(repr(float(tr.final_energy)), tr.n_steps, tr.verdict)
"""
    runs = {}
    for force in ("0", "1"):
        env = dict(os.environ, FBCQE_PURE_PYTHON=force)
        out = subprocess.run(
            [sys.executable, "-c", code], env=env, capture_output=True, text=True
        )
        assert out.returncode == 0, out.stderr
        runs[force] = out.stdout.strip().split()
    e_compiled, e_python = float(runs["0"][0]), float(runs["1"][0])
    assert abs(e_compiled - e_python) <= 1e-9
    assert runs["0"][2] == runs["1"][2]
