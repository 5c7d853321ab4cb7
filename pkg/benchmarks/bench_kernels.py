#!/usr/bin/env python3
"""Compare the compiled kernel core against the pure-Python fallback.

Spawns itself twice (FBCQE_PURE_PYTHON=0/1), times the exponential-action
kernel at several basis sizes plus a fixed-iteration solve, and prints a
speedup table.
"""

import json
import os
import subprocess
import sys
import time


def measure():
    from fbcqe import kernels
    from fbcqe.cqe import CqeConfig, solve, tc_initial_state
    from fbcqe.hamiltonian import TcParams, build_tavis_cummings, sector_labels
    from fbcqe.operators import apply_exp

    results = {"backend": kernels.BACKEND}

    for n_sites, n_max in ((3, 4), (5, 6), (6, 12)):
        h = build_tavis_cummings(TcParams(n_sites, 2.0, 0.5, 1.2, n_max))
        psi = tc_initial_state(h.basis, n_sites)
        apply_exp(h.matrix, -0.35, psi, tol=1e-12)  # warm up caches
        t0 = time.perf_counter()
        reps = 0
        while time.perf_counter() - t0 < 0.4:
            apply_exp(h.matrix, -0.35, psi, tol=1e-12)
            reps += 1
        results[f"expmv dim={h.basis.dim}"] = (time.perf_counter() - t0) / reps

    h = build_tavis_cummings(TcParams(3, 2.0, 0.5, 1.2, 4))
    psi0 = tc_initial_state(h.basis, 3)
    cfg = CqeConfig(initial_state=psi0, max_iters=150, tol_variance=1e-14)
    t0 = time.perf_counter()
    trace = solve(h, cfg, sector_labels=sector_labels(h.basis, 3))
    results[f"solve n_sites=3 ({trace.n_steps} steps)"] = time.perf_counter() - t0
    return results


def main():
    runs = {}
    for force, label in (("0", "compiled"), ("1", "python")):
        env = dict(os.environ, FBCQE_PURE_PYTHON=force)
        out = subprocess.run(
            [sys.executable, __file__, "--measure"],
            env=env,
            capture_output=True,
            text=True,
            check=True,
        )
        runs[label] = json.loads(out.stdout)
        if runs[label].pop("backend") != label:
            print(f"note: compiled extension unavailable; '{label}' ran in pure python")

    keys = [k for k in runs["compiled"] if k in runs["python"]]
    width = max(len(k) for k in keys)
    print(f"{'benchmark':<{width}}  {'compiled':>12}  {'python':>12}  {'speedup':>8}")
    for k in keys:
        c, p = runs["compiled"][k], runs["python"][k]
        print(f"{k:<{width}}  {c * 1e3:>10.3f}ms  {p * 1e3:>10.3f}ms  {p / c:>7.1f}x")


if __name__ == "__main__":
    if "--measure" in sys.argv:
        print(json.dumps(measure()))
    else:
        main()
