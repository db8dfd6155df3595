"""Computable error densities, indicators and the discrete value function."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TimeMesh, dt_max
from .problem import ProblemSpec, check_finite


@dataclass(frozen=True, eq=False)
class ErrorBreakdown:
    rho: np.ndarray
    rho_tilde: np.ndarray
    rho_bar: np.ndarray
    r_bar: np.ndarray
    estimate: float
    floor_value: float

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "floor_value": self.floor_value,
            "max_r_bar": float(np.max(self.r_bar)),
        }


def _eval(problem: ProblemSpec, x, lam, what="H"):
    m = problem.hamiltonian
    with np.errstate(all="ignore"):
        out = np.asarray(m.H(x, lam), dtype=float)
    check_finite(what, out, x, lam)
    return out


def _grads(problem: ProblemSpec, mesh: TimeMesh, traj):
    x, lam = traj.X[:-1], traj.lam[1:]
    with np.errstate(all="ignore"):
        hx, hl = problem.hamiltonian.grad(x, lam)
    hx = np.asarray(hx, dtype=float).reshape(x.shape)
    hl = np.asarray(hl, dtype=float).reshape(x.shape)
    check_finite("H_x", hx, x, lam)
    check_finite("H_lam", hl, x, lam)
    return hx, hl


def density_rho(problem: ProblemSpec, mesh: TimeMesh, traj) -> np.ndarray:
    """``rho_n = -H_lam . H_x / 2`` at ``(X_n, lam_{n+1})``."""
    hx, hl = _grads(problem, mesh, traj)
    return -0.5 * np.einsum("ni,ni->n", hl, hx)


def density_rho_tilde(problem: ProblemSpec, mesh: TimeMesh, traj) -> np.ndarray:
    X, lam = traj.X, traj.lam
    dt = mesh.dt
    h_mid = _eval(problem, X[:-1], lam[1:])
    h_left = _eval(problem, X[:-1], lam[:-1])
    h_right = _eval(problem, X[1:], lam[1:])
    _, hl = _grads(problem, mesh, traj)
    dual = np.einsum("ni,ni->n", lam[:-1] - lam[1:], hl)
    return (h_mid - 0.5 * (h_left + h_right) + 0.5 * dual) / dt


def apply_floor(rho, K: float, dtmax: float) -> np.ndarray:
    """``sgn(rho) max(|rho|, K sqrt(dt_max))`` with ``sgn(0) = +1``."""
    if not K > 0:
        raise ValueError("K must be positive")
    rho = np.asarray(rho, dtype=float)
    sign = np.where(rho < 0, -1.0, 1.0)
    return sign * np.maximum(np.abs(rho), K * np.sqrt(dtmax))


def indicators(rho_bar, mesh: TimeMesh) -> np.ndarray:
    return np.abs(rho_bar) * mesh.dt**2


def error_estimate(rho_bar, mesh: TimeMesh) -> float:
    return float(abs(np.sum(np.asarray(rho_bar) * mesh.dt**2)))


def breakdown(problem: ProblemSpec, mesh: TimeMesh, traj, K: float = 1e-6) -> ErrorBreakdown:
    rho = density_rho(problem, mesh, traj)
    rho_t = density_rho_tilde(problem, mesh, traj)
    dtm = dt_max(mesh)
    rho_b = apply_floor(rho, K, dtm)
    return ErrorBreakdown(
        rho=rho,
        rho_tilde=rho_t,
        rho_bar=rho_b,
        r_bar=indicators(rho_b, mesh),
        estimate=error_estimate(rho_b, mesh),
        floor_value=K * float(np.sqrt(dtm)),
    )


def discrete_value(problem: ProblemSpec, mesh: TimeMesh, traj) -> float:
    """Discrete functional value without tabulating the running cost.

    Along a Symplectic Euler solution the velocity is ``beta_n = H_lam(X_n, lam_{n+1})``
    and ``L(X_n, beta_n) = H - lam_{n+1} . H_lam`` there.
    """
    x, lam = traj.X[:-1], traj.lam[1:]
    h = _eval(problem, x, lam)
    _, hl = _grads(problem, mesh, traj)
    running = h - np.einsum("ni,ni->n", lam, hl)
    return float(np.sum(mesh.dt * running) + problem.hamiltonian.terminal(traj.X[-1]))


def second_order_sum(rho, mesh: TimeMesh) -> float:
    """``sum_n dt_n^2 rho_n`` (signed)."""
    return float(np.sum(np.asarray(rho) * mesh.dt**2))


# --------------------------------------------------------------------------
# inter-level density ratios


@dataclass(frozen=True)
class LevelRatios:
    level: int
    parent_min: float
    parent_max: float
    prev_min: float
    prev_max: float
    c: float
    local_c: np.ndarray  # per interval of this level

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "parent_ratio_min": self.parent_min,
            "parent_ratio_max": self.parent_max,
            "prev_ratio_min": self.prev_min,
            "prev_ratio_max": self.prev_max,
            "c": self.c,
        }


def c_ratios(meshes, rho_bars) -> list[LevelRatios]:
    """Ratio bounds between consecutive refinement levels.

    Two families per interval ``n`` of level ``k``: the density on the
    previous level over the same span, and the density on the level just
    before the interval was created by a split (``parent(n, k)``).  Both are
    divided by the level-``k`` density.
    """
    meshes = list(meshes)
    rho_bars = [np.asarray(r, dtype=float) for r in rho_bars]
    if len(meshes) != len(rho_bars):
        raise ValueError("need one density vector per mesh")
    if len(meshes) < 2:
        raise ValueError("c ratios need at least two levels")
    # split[k][n]: interval n of level k was produced by splitting its parent
    split = [None]
    for k in range(1, len(meshes)):
        p = meshes[k].parent_of
        if p is None:
            raise ValueError(f"level {k} mesh has no parent map")
        counts = np.bincount(p, minlength=meshes[k - 1].N)
        split.append(counts[p] > 1)

    out = []
    for k in range(1, len(meshes)):
        rk = rho_bars[k]
        p = meshes[k].parent_of
        prev = np.abs(rho_bars[k - 1][p] / rk)
        # walk back to the level at which each interval was born
        birth = np.full(meshes[k].N, np.nan)
        idx = np.arange(meshes[k].N)
        alive = np.ones(meshes[k].N, dtype=bool)
        j = k
        while j >= 1 and alive.any():
            born = alive & split[j][idx]
            if born.any():
                anc = meshes[j].parent_of[idx[born]]
                birth[born] = np.abs(rho_bars[j - 1][anc] / rk[born])
                alive &= ~born
            idx = meshes[j].parent_of[idx]
            j -= 1
        fam1 = birth[np.isfinite(birth)]
        pmin = float(fam1.min()) if fam1.size else 1.0
        pmax = float(fam1.max()) if fam1.size else 1.0
        local = np.minimum(prev, 1.0 / prev)
        b = np.where(np.isfinite(birth), np.minimum(birth, 1.0 / birth), 1.0)
        local = np.minimum(local, b)
        lo = min(pmin, float(prev.min()))
        hi = max(pmax, float(prev.max()))
        out.append(LevelRatios(k, pmin, pmax, float(prev.min()), float(prev.max()),
                               min(lo, 1.0 / hi), local))
    return out
