"""Brute-force discrete value function for 1-D problems.

Backward recursion over the given time mesh,

    u(x_i, t_n) = min_k  dt_n L(x_i, beta_k) + I[u(., t_{n+1})](x_i + dt_n beta_k),

with ``I`` linear interpolation on a uniform state grid and ``u(., t_N) = g``.
Controls are sampled uniformly; there is no policy iteration.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..mesh import TimeMesh
from ..problem import ProblemSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DpGrid:
    x_lo: float
    x_hi: float
    nx: int
    n_beta: int
    beta_lo: float
    beta_hi: float

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise ValueError("x_lo must be < x_hi")
        if self.nx < 2 or self.n_beta < 2:
            raise ValueError("need nx >= 2 and n_beta >= 2")
        if not self.beta_lo < self.beta_hi:
            raise ValueError("beta_lo must be < beta_hi")

    @property
    def x(self) -> np.ndarray:
        return self.x_lo + self.dx * np.arange(self.nx)

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / (self.nx - 1)

    @property
    def betas(self) -> np.ndarray:
        return np.linspace(self.beta_lo, self.beta_hi, self.n_beta)

    def refined(self) -> "DpGrid":
        """Halve the state and control spacings."""
        return DpGrid(self.x_lo, self.x_hi, 2 * self.nx - 1, 2 * self.n_beta - 1,
                      self.beta_lo, self.beta_hi)


@dataclass(frozen=True, eq=False)
class DpResult:
    grid: DpGrid
    t: np.ndarray
    values: np.ndarray  # (N+1, nx)
    u_x: np.ndarray  # (N+1, nx)
    clamped: int

    def value_at(self, x: float, n: int = 0) -> float:
        return float(np.interp(x, self.grid.x, self.values[n]))

    def u_x_at(self, x, n) -> np.ndarray:
        """Interpolated gradient table at states ``x[k]`` and time indices ``n[k]``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = np.atleast_1d(np.asarray(n, dtype=int))
        return np.array([np.interp(xi, self.grid.x, self.u_x[ni]) for xi, ni in zip(x, n)])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "t", "u", "u_x"])
            for n, tn in enumerate(self.t):
                for xi, ui, gi in zip(self.grid.x, self.values[n], self.u_x[n]):
                    w.writerow([f"{xi:.17g}", f"{tn:.17g}", f"{ui:.17g}", f"{gi:.17g}"])


def dp_oracle_1d(problem: ProblemSpec, mesh: TimeMesh, grid: DpGrid) -> DpResult:
    if problem.state_dim != 1:
        raise ValueError("the DP oracle is one-dimensional")
    if problem.lagrangian is None:
        raise ValueError(f"problem {problem.label!r} has no closed-form running cost")
    x = grid.x
    betas = grid.betas
    L = np.asarray(problem.lagrangian(x[:, None], betas[None, :]), dtype=float)
    L = np.broadcast_to(L, (grid.nx, grid.n_beta))
    g = problem.hamiltonian.terminal
    N = mesh.N
    values = np.empty((N + 1, grid.nx))
    values[N] = [g(np.array([xi])) for xi in x]
    clamped = 0
    dts = mesh.dt
    for n in range(N - 1, -1, -1):
        cost = np.ascontiguousarray(dts[n] * L)
        values[n], _, c = kernels.dp_step(values[n + 1], grid.x_lo, grid.dx, grid.nx, betas, cost, dts[n])
        clamped += c
    if clamped:
        log.warning("DP oracle clamped %d trial states to [%g, %g]", clamped, grid.x_lo, grid.x_hi)
    u_x = np.gradient(values, grid.dx, axis=1)
    return DpResult(grid, mesh.nodes.copy(), values, u_x, clamped)
