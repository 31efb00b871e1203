"""Compare the numba and numpy kernel paths on the same inputs."""
from __future__ import annotations

import time

import numpy as np

from . import kernels
from ._accel import HAVE_NUMBA


def _best_of(fn, repeats):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run_benchmark(sizes=(32, 128, 256), iterations: int = 20, repeats: int = 3, seed: int = 0) -> list:
    """One row per (kernel, size) with timings and the max disagreement."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(-2, 2, (1, 3, 3))
    b = rng.uniform(-2, 2, (1, 3, 3))
    sign = rng.integers(-1, 2, (3, 3))
    exp = rng.integers(-2, 3, (3, 3))
    rows = []
    for n in sizes:
        u = rng.uniform(-1, 1, (n, n))
        u_raw = np.rint(u * 4096).astype(np.int64)
        cases = {
            "float_run": lambda nb: kernels.float_run(u, u, a, b, [0.1], [0.25], iterations, use_numba=nb)[0],
            "fixed_run": lambda nb: kernels.fixed_run(u_raw, u_raw, sign, exp, sign, exp, 100, -2, 12,
                                                      iterations=iterations, use_numba=nb)[0],
        }
        for name, fn in cases.items():
            t_np, out_np = _best_of(lambda: fn(False), repeats)
            row = {"kernel": name, "size": n, "iterations": iterations, "numpy_s": t_np,
                   "numba_s": None, "speedup": None, "max_abs_diff": None}
            if HAVE_NUMBA:
                fn(True)  # compile outside the timed region
                t_nb, out_nb = _best_of(lambda: fn(True), repeats)
                row.update(numba_s=t_nb, speedup=t_np / t_nb if t_nb else None,
                           max_abs_diff=float(np.max(np.abs(out_nb - out_np))))
            rows.append(row)
    return rows
