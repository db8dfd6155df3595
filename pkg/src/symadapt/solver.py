"""Damped Newton solve of the discrete Symplectic Euler boundary-value system.

Unknowns are the node values ``X_0..X_N`` and ``lam_0..lam_N``.  The public
residual and Jacobian use the stacked ordering

    residual = [X_0 - x_0,
                X_{n+1} - X_n - dt_n H_lam(X_n, lam_{n+1})   (n = 0..N-1),
                lam_n - lam_{n+1} - dt_n H_x(X_n, lam_{n+1}) (n = 0..N-1),
                lam_N - g_x(X_N)]

with unknown columns ``(X_0..X_N, lam_0..lam_N)``.  Internally both are
permuted to a node-interleaved ordering in which the Jacobian is banded with
``3d - 1`` sub- and super-diagonals, and each Newton step is one LAPACK
banded solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import kernels
from .mesh import TimeMesh
from .problem import EvaluationError, ProblemSpec, check_finite, eval_hess_H, terminal_hessian

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Trajectory:
    X: np.ndarray
    lam: np.ndarray
    mesh: TimeMesh

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        lam = np.array(self.lam, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if lam.ndim == 1:
            lam = lam[:, None]
        n = self.mesh.N + 1
        if X.shape[0] != n or lam.shape != X.shape:
            raise ValueError(f"trajectory shapes {X.shape}/{lam.shape} do not fit a mesh with {n} nodes")
        X.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "lam", lam)

    @property
    def mesh_id(self) -> int:
        return id(self.mesh)


@dataclass(frozen=True)
class SolverSettings:
    residual_tol: float = 1e-10
    max_iters: int = 100
    min_step: float = 1e-12
    fd_jacobian: bool = False
    # an equation whose terms are large only resolves to ~eps * (|J| |z|)_i;
    # residual_i <= residual_tol + roundoff_factor * eps * (|J| |z|)_i counts as converged
    roundoff_factor: float = 16.0

    def __post_init__(self):
        if not (self.residual_tol > 0 and self.min_step > 0) or self.roundoff_factor < 0:
            raise ValueError("solver tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class SolveStats:
    iterations: int = 0
    residual_norm: float = np.inf
    residual_history: list = field(default_factory=list)
    damping_history: list = field(default_factory=list)
    converged: bool = False
    # largest roundoff allowance used by the final convergence test
    roundoff_floor: float = 0.0
    continuation: dict | None = None

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
            "residual_history": list(self.residual_history),
            "damping_history": list(self.damping_history),
            "converged": self.converged,
            "roundoff_floor": self.roundoff_floor,
            "continuation": self.continuation,
        }


class SolverFailure(RuntimeError):
    """Base for Newton failures; ``best`` is the lowest-residual iterate seen."""

    def __init__(self, msg, best: Trajectory | None = None, stats: SolveStats | None = None):
        super().__init__(msg)
        self.best = best
        self.stats = stats


class NonConvergence(SolverFailure):
    pass


class StagnatedLineSearch(SolverFailure):
    pass


class SingularJacobian(SolverFailure):
    pass


# --------------------------------------------------------------------------


def _interval_args(traj: Trajectory):
    return traj.X[:-1], traj.lam[1:]


def _eval_grad(problem: ProblemSpec, x, lam):
    with np.errstate(all="ignore"):
        hx, hl = problem.hamiltonian.grad(x, lam)
    check_finite("H_x", hx, x, lam)
    check_finite("H_lam", hl, x, lam)
    return np.asarray(hx, dtype=float).reshape(x.shape), np.asarray(hl, dtype=float).reshape(x.shape)


def residual(problem: ProblemSpec, mesh: TimeMesh, traj: Trajectory) -> np.ndarray:
    """Stacked residual of the discrete Hamiltonian system (length ``2 (N+1) d``)."""
    X, lam = traj.X, traj.lam
    dt = mesh.dt[:, None]
    xe, le = _interval_args(traj)
    hx, hl = _eval_grad(problem, xe, le)
    gx = np.asarray(problem.hamiltonian.terminal_grad(X[-1]), dtype=float).reshape(-1)
    check_finite("g_x", gx[None, :], X[-1:], index_offset=mesh.N)
    return np.concatenate(
        [
            X[0] - problem.initial_state,
            (X[1:] - X[:-1] - dt * hl).ravel(),
            (lam[:-1] - lam[1:] - dt * hx).ravel(),
            lam[-1] - gx,
        ]
    )


def _jacobian_triplets(problem: ProblemSpec, mesh: TimeMesh, traj: Trajectory, fd: bool = False):
    """Nonzeros as (row, col, value) in the node-interleaved ordering.

    Row block ``n`` holds the X-type equation ending at node ``n`` (``X_0 - x_0``
    for ``n = 0``) followed by the lam-type equation starting at node ``n``
    (the terminal condition for ``n = N``).  Column block ``n`` is
    ``(X_n, lam_n)``.
    """
    N, d = mesh.N, problem.state_dim
    xe, le = _interval_args(traj)
    if fd:
        from .problem import fd_hess

        hxx, hxl, hll = fd_hess(problem.hamiltonian, xe, le)
    else:
        hxx, hxl, hll = eval_hess_H(problem.hamiltonian, xe, le)
    hxx = np.asarray(hxx).reshape(N, d, d)
    hxl = np.asarray(hxl).reshape(N, d, d)
    hll = np.asarray(hll).reshape(N, d, d)
    dt = mesh.dt[:, None, None]
    eye = np.broadcast_to(np.eye(d), (N, d, d))
    gxx = terminal_hessian(problem.hamiltonian, traj.X[-1])
    check_finite("g_xx", gxx[None], traj.X[-1:], index_offset=N)

    B = 2 * d
    n = np.arange(N)
    ii, jj = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    rows, cols, vals = [], [], []

    def add(row0, col0, block):
        # row0, col0: (K,) start offsets; block: (K, d, d)
        rows.append((row0[:, None, None] + ii).ravel())
        cols.append((col0[:, None, None] + jj).ravel())
        vals.append(np.asarray(block).ravel())

    # X_{n+1} - X_n - dt H_lam(X_n, lam_{n+1}); rows in block n+1
    rA = (n + 1) * B
    add(rA, n * B, -eye - dt * np.transpose(hxl, (0, 2, 1)))
    add(rA, (n + 1) * B, eye)
    add(rA, (n + 1) * B + d, -dt * hll)
    # lam_n - lam_{n+1} - dt H_x(X_n, lam_{n+1}); rows in block n
    rB = n * B + d
    add(rB, n * B, -dt * hxx)
    add(rB, n * B + d, eye)
    add(rB, (n + 1) * B + d, -eye - dt * hxl)
    # boundary rows
    add(np.array([0]), np.array([0]), np.eye(d)[None])
    add(np.array([N * B + d]), np.array([N * B]), -gxx[None])
    add(np.array([N * B + d]), np.array([N * B + d]), np.eye(d)[None])
    return (
        np.concatenate(rows).astype(np.int64),
        np.concatenate(cols).astype(np.int64),
        np.concatenate(vals).astype(float),
    )


def _orderings(N: int, d: int):
    """Maps from the interleaved index to the stacked residual row / unknown column."""
    blk = np.arange(N + 1)[:, None]
    k = np.arange(d)[None, :]
    # columns: X_blk then lam_blk
    c = np.concatenate([blk * d + k, (N + 1) * d + blk * d + k], axis=1)
    # rows: X-type (initial condition on block 0) then lam-type (terminal condition on block N)
    rx = np.where(blk == 0, k, d + (blk - 1) * d + k)
    rl = d + N * d + blk * d + k
    r = np.concatenate([rx, rl], axis=1)
    return r.ravel().astype(np.int64), c.ravel().astype(np.int64)


def assemble_jacobian(problem: ProblemSpec, mesh: TimeMesh, traj: Trajectory, fd: bool = False) -> sp.csr_matrix:
    """Exact Jacobian of :func:`residual` (rows and columns in the stacked order)."""
    N, d = mesh.N, problem.state_dim
    rows, cols, vals = _jacobian_triplets(problem, mesh, traj, fd)
    rmap, cmap = _orderings(N, d)
    n = 2 * (N + 1) * d
    return sp.csr_matrix((vals, (rmap[rows], cmap[cols])), shape=(n, n))


def _interleave(traj: Trajectory) -> np.ndarray:
    return np.concatenate([traj.X, traj.lam], axis=1).ravel()


def _deinterleave(z: np.ndarray, mesh: TimeMesh, d: int) -> Trajectory:
    Z = z.reshape(mesh.N + 1, 2 * d)
    return Trajectory(Z[:, :d], Z[:, d:], mesh)


def default_initial_guess(problem: ProblemSpec, mesh: TimeMesh) -> Trajectory:
    x0 = problem.initial_state
    g = np.asarray(problem.hamiltonian.terminal_grad(x0), dtype=float).reshape(-1)
    n = mesh.N + 1
    return Trajectory(np.tile(x0, (n, 1)), np.tile(g, (n, 1)), mesh)


def solve_newton(problem: ProblemSpec, mesh: TimeMesh, guess: Trajectory | None = None,
                 settings: SolverSettings | None = None) -> tuple[Trajectory, SolveStats]:
    """Damped Newton with Armijo backtracking on ``|F|^2``.

    Raises :class:`NonConvergence`, :class:`StagnatedLineSearch` or
    :class:`SingularJacobian`, each carrying the best iterate found.
    """
    settings = settings or SolverSettings()
    if guess is None:
        guess = default_initial_guess(problem, mesh)
    if guess.mesh is not mesh and guess.X.shape[0] != mesh.N + 1:
        raise ValueError("initial guess does not fit the mesh")
    d = problem.state_dim
    N = mesh.N
    rmap, cmap = _orderings(N, d)
    nz = 2 * (N + 1) * d
    band = 3 * d - 1

    traj = Trajectory(guess.X, guess.lam, mesh)
    z = _interleave(traj)

    def F(t: Trajectory):
        return residual(problem, mesh, t)[rmap]

    stats = SolveStats()
    f = F(traj)
    fnorm = float(np.max(np.abs(f)))
    phi = 0.5 * float(f @ f)
    stats.residual_history.append(fnorm)
    best, best_norm = traj, fnorm
    eps = np.finfo(float).eps

    def converged(rows, cols, vals):
        if fnorm <= settings.residual_tol:
            return True
        if settings.roundoff_factor == 0:
            return False
        scale = np.zeros(nz)
        np.add.at(scale, rows, np.abs(vals) * np.abs(z[cols]))
        floor = settings.roundoff_factor * eps * scale
        ok = bool(np.all(np.abs(f) <= settings.residual_tol + floor))
        if ok:
            stats.roundoff_floor = float(np.max(floor))
        return ok

    done = False
    for it in range(settings.max_iters + 1):
        if fnorm <= settings.residual_tol:
            done = True
            break
        rows, cols, vals = _jacobian_triplets(problem, mesh, traj, settings.fd_jacobian)
        if converged(rows, cols, vals):
            done = True
            break
        if it == settings.max_iters:
            break
        ab = kernels.band_scatter(rows, cols, vals, nz, band, band)
        try:
            with np.errstate(all="ignore"):
                p = scipy.linalg.solve_banded((band, band), ab, -f, check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            stats.iterations = it
            stats.residual_norm = best_norm
            raise SingularJacobian(f"linear solve failed: {exc}", best, stats) from exc
        if not np.all(np.isfinite(p)):
            stats.iterations = it
            stats.residual_norm = best_norm
            raise SingularJacobian("Newton step is not finite", best, stats)

        alpha = 1.0
        accepted = False
        while alpha >= settings.min_step:
            trial = _deinterleave(z + alpha * p, mesh, d)
            try:
                ft = F(trial)
            except EvaluationError:
                alpha *= 0.5
                continue
            phit = 0.5 * float(ft @ ft)
            if phit <= (1.0 - 2e-4 * alpha) * phi:
                accepted = True
                break
            alpha *= 0.5
        stats.damping_history.append(alpha if accepted else 0.0)
        if not accepted:
            stats.iterations = it + 1
            stats.residual_norm = best_norm
            raise StagnatedLineSearch(
                f"no sufficient decrease down to step {settings.min_step:g} (|F|={fnorm:.3e})",
                best, stats,
            )
        z = z + alpha * p
        traj, f, phi = trial, ft, phit
        fnorm = float(np.max(np.abs(f)))
        stats.residual_history.append(fnorm)
        stats.iterations = it + 1
        if fnorm < best_norm:
            best, best_norm = traj, fnorm
        log.debug("newton it=%d |F|=%.3e alpha=%g", it + 1, fnorm, alpha)

    stats.residual_norm = fnorm
    if not done:
        stats.residual_norm = best_norm
        raise NonConvergence(
            f"residual {best_norm:.3e} > {settings.residual_tol:g} after {stats.iterations} iterations",
            best, stats,
        )
    stats.converged = True
    return traj, stats


def solve_with_continuation(problem: ProblemSpec, mesh: TimeMesh, guess: Trajectory | None = None,
                            settings: SolverSettings | None = None, steps: int = 6,
                            max_relax: float = 1e12) -> tuple[Trajectory, SolveStats]:
    """Newton solve with a homotopy fallback in the problem's stiffness parameter.

    On failure the parameter is relaxed 10x, 100x, ... until a solve from
    ``guess`` succeeds; the relaxed solution is then carried back to the
    target value along ``steps`` geometric continuation steps.
    """
    try:
        return solve_newton(problem, mesh, guess, settings)
    except SolverFailure as first:
        cont = problem.continuation
        if cont is None:
            raise
        failure = first
    factor = 10.0
    while factor <= max_relax:
        start = cont.relaxed(factor)
        try:
            traj, _ = solve_newton(cont.build(start), mesh, guess, settings)
        except SolverFailure:
            factor *= 10.0
            continue
        path = [start]
        for value in np.geomspace(start, cont.value, steps + 1)[1:-1]:
            traj, _ = solve_newton(cont.build(float(value)), mesh, traj, settings)
            path.append(float(value))
        traj, stats = solve_newton(problem, mesh, traj, settings)
        path.append(cont.value)
        stats.continuation = {"parameter": cont.name, "path": path}
        log.info("%s: continuation in %s from %g", problem.label, cont.name, start)
        return traj, stats
    raise failure
