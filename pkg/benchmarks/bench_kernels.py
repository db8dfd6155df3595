"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-``repeat`` wall time of each path
and the speedup.  JIT compilation is excluded by a warm-up call.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from symadapt import kernels
from symadapt._accel import NUMBA_AVAILABLE


def dp_case(nx=2001, nb=201):
    x = np.linspace(-0.1, 0.6, nx)
    betas = np.linspace(-1.0, 1.0, nb)
    cost = np.ascontiguousarray(0.025 * np.broadcast_to(x[:, None] ** 10, (nx, nb)))
    u = x**2
    return (u, -0.1, x[1] - x[0], nx, betas, cost, 0.025)


def band_case(N=20000, d=2):
    rng = np.random.default_rng(0)
    n = 2 * (N + 1) * d
    lower = upper = 3 * d - 1
    rows, cols = [], []
    for off in range(-lower, upper + 1):
        c = np.arange(max(0, off), min(n, n + off))
        rows.append(c - off)
        cols.append(c)
    rows = np.concatenate(rows).astype(np.int64)
    cols = np.concatenate(cols).astype(np.int64)
    return (rows, cols, rng.standard_normal(rows.size), n, lower, upper)


def bench(name, f_np, f_nb, args, repeat):
    f_nb(*args)  # compile
    a = f_np(*args)
    b = f_nb(*args)
    for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
        assert np.array_equal(x, y), f"{name}: numba and numpy disagree"
    t_np = min(timeit.repeat(lambda: f_np(*args), number=1, repeat=repeat))
    t_nb = min(timeit.repeat(lambda: f_nb(*args), number=1, repeat=repeat))
    print(f"{name:14s} numpy {t_np * 1e3:9.3f} ms   numba {t_nb * 1e3:9.3f} ms   speedup {t_np / t_nb:6.1f}x")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    if not NUMBA_AVAILABLE:
        print("numba is not installed; nothing to compare")
        return
    bench("dp_step", kernels.dp_step_numpy, kernels.dp_step_numba, dp_case(), args.repeat)
    bench("band_scatter", kernels.band_scatter_numpy, kernels.band_scatter_numba, band_case(), args.repeat)


if __name__ == "__main__":
    main()
