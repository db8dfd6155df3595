"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public names (``band_scatter``, ``dp_step``) dispatch on
:data:`symadapt._accel.USE_NUMBA`.  Both paths perform the same floating
point operations in the same order, so results agree bit for bit.
"""

from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit

# --------------------------------------------------------------------------
# COO triplets -> LAPACK banded storage


def band_scatter_numpy(rows, cols, vals, n, lower, upper):
    ab = np.zeros((lower + upper + 1, n))
    ab[upper + rows - cols, cols] = vals
    return ab


@njit(cache=True)
def band_scatter_numba(rows, cols, vals, n, lower, upper):
    ab = np.zeros((lower + upper + 1, n))
    for k in range(rows.shape[0]):
        ab[upper + rows[k] - cols[k], cols[k]] = vals[k]
    return ab


# --------------------------------------------------------------------------
# one backward step of the discrete dynamic program on a uniform 1-D grid


def dp_step_numpy(u_next, x_lo, dx, nx, betas, cost, dt):
    x = x_lo + dx * np.arange(nx)
    x_hi = x_lo + dx * (nx - 1)
    y = x[:, None] + dt * betas[None, :]
    clamped = int(np.count_nonzero((y < x_lo) | (y > x_hi)))
    y = np.minimum(np.maximum(y, x_lo), x_hi)
    pos = (y - x_lo) / dx
    i = np.minimum(np.floor(pos).astype(np.int64), nx - 2)
    w = pos - i
    total = cost + (u_next[i] * (1.0 - w) + u_next[i + 1] * w)
    k = np.argmin(total, axis=1)
    return total[np.arange(nx), k], k, clamped


@njit(cache=True)
def dp_step_numba(u_next, x_lo, dx, nx, betas, cost, dt):
    nb = betas.shape[0]
    x_hi = x_lo + dx * (nx - 1)
    out = np.empty(nx)
    arg = np.empty(nx, dtype=np.int64)
    clamped = 0
    for a in range(nx):
        x = x_lo + dx * a
        best = np.inf
        kbest = 0
        for b in range(nb):
            y = x + dt * betas[b]
            if y < x_lo or y > x_hi:
                clamped += 1
            y = min(max(y, x_lo), x_hi)
            pos = (y - x_lo) / dx
            i = min(int(np.floor(pos)), nx - 2)
            w = pos - i
            v = cost[a, b] + (u_next[i] * (1.0 - w) + u_next[i + 1] * w)
            if v < best:
                best = v
                kbest = b
        out[a] = best
        arg[a] = kbest
    return out, arg, clamped


if USE_NUMBA:
    band_scatter = band_scatter_numba
    dp_step = dp_step_numba
else:
    band_scatter = band_scatter_numpy
    dp_step = dp_step_numpy
