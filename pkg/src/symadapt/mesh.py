"""Nonuniform time partitions with one level of parent tracking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class TimeMesh:
    """Strictly increasing nodes ``0 = t_0 < ... < t_N = T``.

    ``parent_of[n]`` is the index of the interval on the previous level that
    contains interval ``n``; it is ``None`` on level 0.
    """

    nodes: np.ndarray
    level: int = 0
    parent_of: np.ndarray | None = None

    def __post_init__(self):
        t = np.array(self.nodes, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a mesh needs at least two nodes")
        if t[0] != 0.0:
            raise ValueError(f"first node must be 0, got {t[0]}")
        if not np.all(np.diff(t) > 0):
            raise ValueError("mesh nodes must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "nodes", t)
        if self.parent_of is not None:
            p = np.array(self.parent_of, dtype=np.int64)
            if p.shape != (t.size - 1,):
                raise ValueError("parent_of needs one entry per interval")
            p.setflags(write=False)
            object.__setattr__(self, "parent_of", p)

    @property
    def N(self) -> int:
        return self.nodes.size - 1

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.nodes)


def uniform_mesh(T: float, N: int) -> TimeMesh:
    if not (T > 0 and np.isfinite(T)):
        raise ValueError(f"T must be positive, got {T}")
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    N = int(N)
    t = T * np.arange(N + 1) / N
    t[-1] = T
    return TimeMesh(t, 0, None)


def refine(mesh: TimeMesh, flags, M: int = 2) -> TimeMesh:
    """Split every flagged interval into ``M`` equal parts."""
    flags = np.asarray(flags, dtype=bool)
    if flags.shape != (mesh.N,):
        raise ValueError(f"expected {mesh.N} flags, got shape {flags.shape}")
    if int(M) != M or M < 2:
        raise ValueError(f"M must be an integer >= 2, got {M}")
    M = int(M)
    t = mesh.nodes
    dt = mesh.dt
    counts = np.where(flags, M, 1)
    parent = np.repeat(np.arange(mesh.N), counts)
    # sub-node offsets j = 0..count-1 within each parent interval
    starts = np.cumsum(counts) - counts
    j = np.arange(parent.size) - starts[parent]
    scale = np.where(flags, 1.0 / M, 1.0)[parent]
    left = t[parent] + j * (dt[parent] * scale)
    # t_n itself for j == 0 keeps the old nodes bit-identical
    left = np.where(j == 0, t[parent], left)
    nodes = np.append(left, t[-1])
    return TimeMesh(nodes, mesh.level + 1, parent)


def dt_max(mesh: TimeMesh) -> float:
    return float(np.max(mesh.dt))


def same_span(a: TimeMesh, b: TimeMesh) -> bool:
    return a.nodes[0] == b.nodes[0] and np.isclose(a.T, b.T, rtol=4 * np.finfo(float).eps, atol=0)


def interpolate_trajectory(source_mesh: TimeMesh, source_traj, target_mesh: TimeMesh):
    """Piecewise-linear transfer of ``X`` and ``lam`` node values onto ``target_mesh``."""
    from .solver import Trajectory

    if not same_span(source_mesh, target_mesh):
        raise ValueError(
            f"mesh spans differ: [0, {source_mesh.T}] vs [0, {target_mesh.T}]"
        )
    ts, tt = source_mesh.nodes, target_mesh.nodes.copy()
    tt[-1] = ts[-1]

    def transfer(Y):
        out = np.empty((tt.size, Y.shape[1]))
        for i in range(Y.shape[1]):
            out[:, i] = np.interp(tt, ts, Y[:, i])
        out[0] = Y[0]
        out[-1] = Y[-1]
        return out

    return Trajectory(transfer(source_traj.X), transfer(source_traj.lam), target_mesh)
