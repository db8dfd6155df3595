"""Finite-difference audits of model derivatives and of the Newton Jacobian."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import uniform_mesh
from .problem import ProblemSpec
from .solver import Trajectory, assemble_jacobian, residual

GRAD_TOL = 1e-6
HESS_TOL = 1e-5

# sampling boxes (x_lo, x_hi, lam_lo, lam_hi) per coordinate; singular keeps s
# a fixed distance from t0 where the regularized coefficient is C^2 only on
# the eps scale
_BOXES = {
    "hyper_sensitive": ([-1.5], [1.5], [-3.0], [3.0]),
    "simple_control": ([-0.6], [0.6], [-2.0], [2.0]),
    "singular": ([0.2, 0.0], [3.0, 4.0], [-2.0, -2.0], [2.0, 2.0]),
    "toy_drift": ([-2.0], [2.0], [-2.0], [2.0]),
    "toy_quadratic": ([-2.0], [2.0], [-2.0], [2.0]),
}
SINGULAR_GAP = 0.05


def sample_points(problem: ProblemSpec, n: int, rng: np.random.Generator):
    d = problem.state_dim
    if problem.label in _BOXES:
        xlo, xhi, llo, lhi = (np.asarray(b, dtype=float) for b in _BOXES[problem.label])
    else:
        x0 = np.asarray(problem.initial_state)
        xlo, xhi, llo, lhi = x0 - 1.0, x0 + 1.0, -np.ones(d), np.ones(d)
    x = rng.uniform(xlo, xhi, size=(n, d))
    lam = rng.uniform(llo, lhi, size=(n, d))
    if problem.label == "singular":
        t0 = problem.params["t0"]
        s = x[:, 1]
        near = np.abs(s - t0) < SINGULAR_GAP
        s[near] = np.where(s[near] < t0, s[near] - SINGULAR_GAP, s[near] + SINGULAR_GAP)
    return x, lam


def _rel(a, b) -> np.ndarray:
    """Max-norm difference over each point, relative to ``max(1, |b|_inf)``."""
    a = a.reshape(a.shape[0], -1)
    b = b.reshape(b.shape[0], -1)
    return np.max(np.abs(a - b), axis=1) / np.maximum(1.0, np.max(np.abs(b), axis=1))


def _step(z, rel):
    return rel * (1.0 + np.abs(z))


def _d4(f, z, j, h):
    """Fourth-order central difference of ``f`` along coordinate ``j`` of ``z``."""
    e = np.zeros(z.shape[1])
    e[j] = 1.0
    hh = h[:, None] * e
    fp2, fp1, fm1, fm2 = f(z + 2 * hh), f(z + hh), f(z - hh), f(z - 2 * hh)
    h = h.reshape((-1,) + (1,) * (np.ndim(fp1) - 1))
    return (fm2 - fp2 + 8.0 * (fp1 - fm1)) / (12.0 * h)


def fd_grad(problem: ProblemSpec, x, lam, rel: float = 1e-4):
    """Central differences of ``H``."""
    H = problem.hamiltonian.H
    m, d = x.shape
    gx = np.empty((m, d))
    gl = np.empty((m, d))
    for j in range(d):
        gx[:, j] = _d4(lambda z: np.asarray(H(z, lam)), x, j, _step(x[:, j], rel))
        gl[:, j] = _d4(lambda z: np.asarray(H(x, z)), lam, j, _step(lam[:, j], rel))
    return gx, gl


def fd_hess_blocks(problem: ProblemSpec, x, lam, rel: float = 1e-4):
    """Central differences of the analytic gradient; also returns the (lam, x) mixed block."""
    grad = problem.hamiltonian.grad
    m, d = x.shape
    hxx = np.empty((m, d, d))
    hxl = np.empty((m, d, d))
    hlx = np.empty((m, d, d))
    hll = np.empty((m, d, d))

    def gx_of_x(z):
        return np.asarray(grad(z, lam)[0], dtype=float).reshape(m, d)

    def gl_of_x(z):
        return np.asarray(grad(z, lam)[1], dtype=float).reshape(m, d)

    def gx_of_l(z):
        return np.asarray(grad(x, z)[0], dtype=float).reshape(m, d)

    def gl_of_l(z):
        return np.asarray(grad(x, z)[1], dtype=float).reshape(m, d)

    for j in range(d):
        hx_ = _step(x[:, j], rel)
        hl_ = _step(lam[:, j], rel)
        hxx[:, :, j] = _d4(gx_of_x, x, j, hx_)
        hlx[:, :, j] = _d4(gl_of_x, x, j, hx_)
        hxl[:, :, j] = _d4(gx_of_l, lam, j, hl_)
        hll[:, :, j] = _d4(gl_of_l, lam, j, hl_)
    return hxx, hxl, hlx, hll


@dataclass
class AuditReport:
    label: str
    points: int
    errors: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.errors[k] <= self.tolerances[k] for k in self.errors)

    def failures(self) -> list[str]:
        return [k for k in self.errors if not self.errors[k] <= self.tolerances[k]]

    def to_dict(self) -> dict:
        return {"label": self.label, "points": self.points, "passed": self.passed,
                "max_relative_error": dict(self.errors), "tolerance": dict(self.tolerances)}


def audit_model(problem: ProblemSpec, n_points: int = 100, seed: int = 0,
                jacobian_iterates: int = 10, jacobian_N: int = 4) -> AuditReport:
    """Gradient, Hessian, terminal and Jacobian checks at seeded random points."""
    rng = np.random.default_rng(seed)
    m = problem.hamiltonian
    x, lam = sample_points(problem, n_points, rng)
    rep = AuditReport(problem.label, n_points)

    hx, hl = (np.asarray(v, dtype=float).reshape(x.shape) for v in m.grad(x, lam))
    fx, fl = fd_grad(problem, x, lam)
    rep.errors["grad_x"] = float(_rel(hx, fx).max())
    rep.errors["grad_lam"] = float(_rel(hl, fl).max())

    hxx, hxl, hll = (np.asarray(v, dtype=float) for v in m.hess(x, lam))
    fxx, fxl, flx, fll = fd_hess_blocks(problem, x, lam)
    rep.errors["hess_xx"] = float(_rel(hxx, fxx).max())
    rep.errors["hess_xlam"] = float(_rel(hxl, fxl).max())
    # the (lam, x) block transposed must be the same matrix
    rep.errors["hess_lamx_T"] = float(_rel(np.swapaxes(hxl, 1, 2), flx).max())
    rep.errors["hess_lamlam"] = float(_rel(hll, fll).max())

    tg = np.array([m.terminal_grad(xi) for xi in x])
    d = x.shape[1]
    ftg = np.empty_like(tg)
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        h = _step(x[:, j], 1e-4)
        ftg[:, j] = [(m.terminal(xi - 2 * hi * e) - m.terminal(xi + 2 * hi * e)
                      + 8.0 * (m.terminal(xi + hi * e) - m.terminal(xi - hi * e))) / (12 * hi)
                     for xi, hi in zip(x, h)]
    rep.errors["terminal_grad"] = float(_rel(tg, ftg).max())

    rep.errors["jacobian"] = float(max(
        jacobian_error(problem, jacobian_N, rng) for _ in range(jacobian_iterates)))

    for k in rep.errors:
        rep.tolerances[k] = GRAD_TOL if k.startswith(("grad", "terminal")) else HESS_TOL
    return rep


def jacobian_error(problem: ProblemSpec, N: int, rng: np.random.Generator, rel: float = 1e-6) -> float:
    """Relative max-norm gap between the assembled Jacobian and FD of the residual."""
    mesh = uniform_mesh(problem.horizon, N)
    x, lam = sample_points(problem, N + 1, rng)
    if problem.label == "singular":
        # keep the clock coordinate consistent with a mesh that avoids t0 by construction
        x[:, 1] = mesh.nodes
    traj = Trajectory(x, lam, mesh)
    J = assemble_jacobian(problem, mesh, traj).toarray()
    z = np.concatenate([x.ravel(), lam.ravel()])
    n = z.size
    half = n // 2
    d = x.shape[1]
    fd = np.empty_like(J)
    for k in range(n):
        h = rel * (1.0 + abs(z[k]))
        zp, zm = z.copy(), z.copy()
        zp[k] += h
        zm[k] -= h
        rp = residual(problem, mesh, Trajectory(zp[:half].reshape(-1, d), zp[half:].reshape(-1, d), mesh))
        rm = residual(problem, mesh, Trajectory(zm[:half].reshape(-1, d), zm[half:].reshape(-1, d), mesh))
        fd[:, k] = (rp - rm) / (2.0 * h)
    return float(np.max(np.abs(J - fd)) / max(1.0, np.max(np.abs(fd))))
