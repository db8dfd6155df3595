"""Hamiltonian-level description of a finite-horizon optimal control problem.

Every downstream module sees a problem only through ``H(x, lam)``, its first
and second derivatives, and the terminal cost ``g``.  Model callables are
*batched*: they receive ``x`` and ``lam`` of shape ``(m, d)`` and return

* ``H``    -> ``(m,)``
* ``grad`` -> ``(H_x, H_lam)``, each ``(m, d)``
* ``hess`` -> ``(H_xx, H_xlam, H_lamlam)``, each ``(m, d, d)`` with
  ``H_xlam[k, i, j] = d^2 H / dx_i dlam_j``.

Terminal callables act on a single state vector of shape ``(d,)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

Array = np.ndarray


class EvaluationError(FloatingPointError):
    """A model returned NaN or Inf.

    ``index`` is the interval/node index the evaluation belonged to (when
    known), ``x`` and ``lam`` the offending arguments.
    """

    def __init__(self, what: str, index=None, x=None, lam=None):
        self.what = what
        self.index = index
        self.x = None if x is None else np.asarray(x)
        self.lam = None if lam is None else np.asarray(lam)
        msg = f"non-finite {what}"
        if index is not None:
            msg += f" at n={index}"
        if x is not None:
            msg += f", x={self.x.tolist()}"
        if lam is not None:
            msg += f", lam={self.lam.tolist()}"
        super().__init__(msg)


class UnsupportedOperation(NotImplementedError):
    pass


@dataclass(frozen=True)
class HamiltonianModel:
    """Closed-form Hamiltonian with analytic derivatives (batched callables)."""

    state_dim: int
    H: Callable[[Array, Array], Array]
    grad: Callable[[Array, Array], tuple[Array, Array]]
    hess: Callable[[Array, Array], tuple[Array, Array, Array]] | None
    terminal: Callable[[Array], float]
    terminal_grad: Callable[[Array], Array]
    terminal_hess: Callable[[Array], Array] | None = None
    control_recovery: Callable[[Array, Array], Array] | None = None

    def __post_init__(self):
        if int(self.state_dim) < 1:
            raise ValueError("state_dim must be a positive integer")


@dataclass(frozen=True)
class Continuation:
    """How to relax a stiff problem parameter for homotopy restarts.

    ``stiff_when`` is ``"large"`` for parameters like a terminal penalty and
    ``"small"`` for regularization widths.
    """

    name: str
    value: float
    stiff_when: str
    build: Callable[[float], "ProblemSpec"]

    def relaxed(self, factor: float) -> float:
        return self.value / factor if self.stiff_when == "large" else self.value * factor


@dataclass(frozen=True)
class ProblemSpec:
    hamiltonian: HamiltonianModel
    horizon: float
    initial_state: Array
    label: str
    params: dict = field(default_factory=dict)
    # running cost L(x, beta) on batched 1-D arrays (+inf where infeasible);
    # only needed by the dynamic-programming oracle
    lagrangian: Callable[[Array, Array], Array] | None = None
    continuation: Continuation | None = None
    # exact value u(x0, 0) of the continuous problem, when known
    exact_value: float | None = None

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.initial_state, dtype=float))
        x0.setflags(write=False)
        object.__setattr__(self, "initial_state", x0)
        if not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if x0.shape != (self.hamiltonian.state_dim,):
            raise ValueError(
                f"initial_state has shape {x0.shape}, expected ({self.hamiltonian.state_dim},)"
            )

    @property
    def state_dim(self) -> int:
        return self.hamiltonian.state_dim


def _batch(model: HamiltonianModel, x, lam):
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    single = x.ndim <= 1
    d = model.state_dim
    return x.reshape(-1, d), lam.reshape(-1, d), single


def check_finite(what: str, values, x=None, lam=None, index_offset: int = 0):
    """Raise :class:`EvaluationError` on the first non-finite row of ``values``."""
    values = np.asarray(values)
    if np.all(np.isfinite(values)):
        return
    bad = ~np.isfinite(values)
    rows = bad.reshape(bad.shape[0], -1).any(axis=1) if bad.ndim else np.array([True])
    k = int(np.flatnonzero(rows)[0])
    raise EvaluationError(
        what,
        index=k + index_offset,
        x=None if x is None else x[k],
        lam=None if lam is None else lam[k],
    )


def eval_H(model: HamiltonianModel, x, lam):
    xb, lb, single = _batch(model, x, lam)
    with np.errstate(all="ignore"):
        h = np.asarray(model.H(xb, lb), dtype=float)
    check_finite("H", h, xb, lb)
    return float(h[0]) if single else h


def eval_grad_H(model: HamiltonianModel, x, lam):
    xb, lb, single = _batch(model, x, lam)
    with np.errstate(all="ignore"):
        hx, hl = model.grad(xb, lb)
    check_finite("H_x", hx, xb, lb)
    check_finite("H_lam", hl, xb, lb)
    if single:
        return hx[0], hl[0]
    return hx, hl


def eval_hess_H(model: HamiltonianModel, x, lam):
    """Second-derivative blocks; falls back to central differences of ``grad``."""
    xb, lb, single = _batch(model, x, lam)
    if model.hess is None:
        blocks = fd_hess(model, xb, lb)
    else:
        with np.errstate(all="ignore"):
            blocks = model.hess(xb, lb)
    for name, b in zip(("H_xx", "H_xlam", "H_lamlam"), blocks):
        check_finite(name, b, xb, lb)
    if single:
        return tuple(b[0] for b in blocks)
    return blocks


def fd_hess(model: HamiltonianModel, x: Array, lam: Array, rel: float = 1e-6):
    """Central differences of the analytic gradient.  Slow; d extra grad calls each side."""
    m, d = x.shape
    hxx = np.empty((m, d, d))
    hxl = np.empty((m, d, d))
    hll = np.empty((m, d, d))
    for j in range(d):
        hx_ = (rel * (1.0 + np.abs(x[:, j])))
        hl_ = (rel * (1.0 + np.abs(lam[:, j])))
        e = np.zeros(d)
        e[j] = 1.0
        gxp = model.grad(x + hx_[:, None] * e, lam)
        gxm = model.grad(x - hx_[:, None] * e, lam)
        glp = model.grad(x, lam + hl_[:, None] * e)
        glm = model.grad(x, lam - hl_[:, None] * e)
        hxx[:, :, j] = (gxp[0] - gxm[0]) / (2 * hx_[:, None])
        # d(H_x_i)/dlam_j
        hxl[:, :, j] = (glp[0] - glm[0]) / (2 * hl_[:, None])
        hll[:, :, j] = (glp[1] - glm[1]) / (2 * hl_[:, None])
    return hxx, hxl, hll


def terminal_hessian(model: HamiltonianModel, x) -> Array:
    """Analytic ``g_xx`` when supplied, else differences of ``g_x`` with h = 1e-8 (1+|x|)."""
    x = np.asarray(x, dtype=float)
    if model.terminal_hess is not None:
        return np.asarray(model.terminal_hess(x), dtype=float).reshape(x.size, x.size)
    d = x.size
    out = np.empty((d, d))
    for j in range(d):
        h = 1e-8 * (1.0 + abs(x[j]))
        e = np.zeros(d)
        e[j] = h
        out[:, j] = (np.asarray(model.terminal_grad(x + e)) - np.asarray(model.terminal_grad(x - e))) / (2 * h)
    return out


def recover_control(model: HamiltonianModel, x, lam):
    if model.control_recovery is None:
        raise UnsupportedOperation("model has no closed-form control recovery")
    xb, lb, single = _batch(model, x, lam)
    a = np.asarray(model.control_recovery(xb, lb), dtype=float)
    return a[0] if single else a


class SmoothAbs(NamedTuple):
    """``sqrt(z**2 + delta**2)`` and its first two derivatives."""

    delta: float
    value: Callable[[Array], Array]
    d1: Callable[[Array], Array]
    d2: Callable[[Array], Array]


def regularize_abs(delta: float) -> SmoothAbs:
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    dd = float(delta) ** 2

    def value(z):
        return np.hypot(z, delta)

    def d1(z):
        return z / np.hypot(z, delta)

    def d2(z):
        r = np.hypot(z, delta)
        return dd / (r * r * r)

    return SmoothAbs(float(delta), value, d1, d2)


# --------------------------------------------------------------------------
# explicit time dependence


@dataclass(frozen=True)
class TimeDependentHamiltonian:
    """``H(x, s, lam)`` for a problem whose flux/running cost depend on time ``s``.

    Batched: ``x``, ``lam`` are ``(m, d)``, ``s`` is ``(m,)``.

    * ``grad`` -> ``(H_x (m,d), H_s (m,), H_lam (m,d))``
    * ``hess`` -> ``(H_xx, H_xs, H_ss, H_xlam, H_slam, H_lamlam)`` with shapes
      ``(m,d,d), (m,d), (m,), (m,d,d), (m,d), (m,d,d)``.
    """

    state_dim: int
    H: Callable
    grad: Callable
    hess: Callable
    terminal: Callable[[Array], float]
    terminal_grad: Callable[[Array], Array]
    terminal_hess: Callable[[Array], Array] | None = None
    control_recovery: Callable | None = None


@dataclass(frozen=True)
class TimeDependentProblem:
    hamiltonian: TimeDependentHamiltonian
    horizon: float
    initial_state: Array
    label: str
    params: dict = field(default_factory=dict)


def augment_time(base: TimeDependentProblem) -> ProblemSpec:
    """Append the clock ``s(t) = t`` to the state.

    The augmented state is ``(x, s)`` and the dual ``(lam_1, lam_2)``; the
    Hamiltonian picks up the additive ``lam_2`` term and ``g`` ignores ``s``.
    """
    b = base.hamiltonian
    d = b.state_dim
    D = d + 1

    def split(x, lam):
        return x[:, :d], x[:, d], lam[:, :d]

    def H(x, lam):
        xx, s, l1 = split(x, lam)
        return b.H(xx, s, l1) + lam[:, d]

    def grad(x, lam):
        xx, s, l1 = split(x, lam)
        hx, hs, hl = b.grad(xx, s, l1)
        m = x.shape[0]
        gx = np.empty((m, D))
        gl = np.empty((m, D))
        gx[:, :d] = hx
        gx[:, d] = hs
        gl[:, :d] = hl
        gl[:, d] = 1.0
        return gx, gl

    def hess(x, lam):
        xx, s, l1 = split(x, lam)
        hxx, hxs, hss, hxl, hsl, hll = b.hess(xx, s, l1)
        m = x.shape[0]
        Hxx = np.zeros((m, D, D))
        Hxl = np.zeros((m, D, D))
        Hll = np.zeros((m, D, D))
        Hxx[:, :d, :d] = hxx
        Hxx[:, :d, d] = hxs
        Hxx[:, d, :d] = hxs
        Hxx[:, d, d] = hss
        Hxl[:, :d, :d] = hxl
        Hxl[:, d, :d] = hsl
        Hll[:, :d, :d] = hll
        return Hxx, Hxl, Hll

    def terminal(x):
        return b.terminal(np.asarray(x)[:d])

    def terminal_grad(x):
        out = np.zeros(D)
        out[:d] = b.terminal_grad(np.asarray(x)[:d])
        return out

    terminal_hess = None
    if b.terminal_hess is not None:
        def terminal_hess(x):
            out = np.zeros((D, D))
            out[:d, :d] = np.asarray(b.terminal_hess(np.asarray(x)[:d])).reshape(d, d)
            return out

    control = None
    if b.control_recovery is not None:
        def control(x, lam):
            xx, s, l1 = split(x, lam)
            return b.control_recovery(xx, s, l1)

    model = HamiltonianModel(
        state_dim=D,
        H=H,
        grad=grad,
        hess=hess,
        terminal=terminal,
        terminal_grad=terminal_grad,
        terminal_hess=terminal_hess,
        control_recovery=control,
    )
    x0 = np.append(np.asarray(base.initial_state, dtype=float).reshape(d), 0.0)
    return ProblemSpec(model, base.horizon, x0, base.label, dict(base.params))


def from_autonomous(problem: ProblemSpec) -> TimeDependentProblem:
    """View an autonomous problem as a (trivially) time-dependent one."""
    m = problem.hamiltonian
    d = m.state_dim

    def H(x, s, lam):
        return m.H(x, lam)

    def grad(x, s, lam):
        hx, hl = m.grad(x, lam)
        return hx, np.zeros(x.shape[0]), hl

    def hess(x, s, lam):
        hxx, hxl, hll = eval_hess_H(m, x, lam)
        k = x.shape[0]
        return hxx, np.zeros((k, d)), np.zeros(k), hxl, np.zeros((k, d)), hll

    th = m.terminal_hess
    if th is None:
        def th(x):
            return terminal_hessian(m, x)

    base = TimeDependentHamiltonian(d, H, grad, hess, m.terminal, m.terminal_grad, th)
    return TimeDependentProblem(base, problem.horizon, problem.initial_state, problem.label + "+t",
                                dict(problem.params))
