"""Shipped problems: three benchmark problems and two closed-form toys."""

from __future__ import annotations

import numpy as np

from ..problem import (
    Continuation,
    HamiltonianModel,
    ProblemSpec,
    TimeDependentHamiltonian,
    TimeDependentProblem,
    augment_time,
    regularize_abs,
)
from .reference import reference_singular

SINGULAR_T0 = 5.0 / 3.0
SINGULAR_T = 4.0


def _col(v):
    return np.asarray(v, dtype=float)[..., None]


def _diag(v):
    return np.asarray(v, dtype=float)[..., None, None]


# --------------------------------------------------------------------------


def hyper_sensitive(gamma: float = 1e6) -> ProblemSpec:
    """Minimize int_0^25 (X^2 + a^2) dt + gamma (X(25) - 1)^2 with X' = -X^3 + a, X(0) = 1.

    ``H(x, lam) = -lam x^3 - lam^2 / 4 + x^2``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")

    def H(x, l):
        x, l = x[:, 0], l[:, 0]
        return -l * x**3 - 0.25 * l * l + x * x

    def grad(x, l):
        x, l = x[:, 0], l[:, 0]
        return _col(-3.0 * l * x * x + 2.0 * x), _col(-(x**3) - 0.5 * l)

    def hess(x, l):
        x, l = x[:, 0], l[:, 0]
        return _diag(-6.0 * l * x + 2.0), _diag(-3.0 * x * x), _diag(np.full_like(x, -0.5))

    model = HamiltonianModel(
        state_dim=1,
        H=H,
        grad=grad,
        hess=hess,
        terminal=lambda x: float(gamma * (np.asarray(x)[0] - 1.0) ** 2),
        terminal_grad=lambda x: np.array([2.0 * gamma * (np.asarray(x)[0] - 1.0)]),
        terminal_hess=lambda x: np.array([[2.0 * gamma]]),
        control_recovery=lambda x, l: -0.5 * l,
    )

    def lagrangian(x, beta):
        return (beta + x**3) ** 2 + x * x

    return ProblemSpec(
        model, 25.0, [1.0], "hyper_sensitive", {"gamma": gamma},
        lagrangian=lagrangian,
        continuation=Continuation("gamma", gamma, "large", hyper_sensitive),
    )


def simple_control(delta: float = 1e-10) -> ProblemSpec:
    """Minimize int_0^1 X^10 dt with X' = a in [-1, 1], X(0) = 0.5.

    The Hamiltonian ``-|lam| + x^10`` is smoothed to ``-sqrt(lam^2 + delta^2) + x^10``.
    """
    sabs = regularize_abs(delta)

    def H(x, l):
        return -sabs.value(l[:, 0]) + x[:, 0] ** 10

    def grad(x, l):
        return _col(10.0 * x[:, 0] ** 9), _col(-sabs.d1(l[:, 0]))

    def hess(x, l):
        x0 = x[:, 0]
        return _diag(90.0 * x0**8), _diag(np.zeros_like(x0)), _diag(-sabs.d2(l[:, 0]))

    model = HamiltonianModel(
        state_dim=1,
        H=H,
        grad=grad,
        hess=hess,
        terminal=lambda x: 0.0,
        terminal_grad=lambda x: np.zeros(1),
        terminal_hess=lambda x: np.zeros((1, 1)),
        # the smoothed minimizer; 0 at lam = 0, -sign(lam) for |lam| >> delta
        control_recovery=lambda x, l: -sabs.d1(l),
    )

    def lagrangian(x, beta):
        # unregularized running cost
        return np.where(np.abs(beta) <= 1.0 + 1e-12, x**10, np.inf)

    return ProblemSpec(
        model, 1.0, [0.5], "simple_control", {"delta": delta},
        lagrangian=lagrangian,
        continuation=Continuation("delta", delta, "small", simple_control),
        exact_value=0.5**11 / 11.0,
    )


def exact_simple_trajectory(t):
    """Optimal path of the unregularized simple problem."""
    return np.maximum(0.5 - np.asarray(t, dtype=float), 0.0)


def singular_base(eps: float = 1e-10, beta: float = 0.75, t0: float = SINGULAR_T0,
                  T: float = SINGULAR_T) -> TimeDependentProblem:
    """Time-dependent form of the singular problem before clock augmentation."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    x_ref_T = reference_singular(T, eps, beta, t0)
    x_ref_0 = reference_singular(0.0, eps, beta, t0)
    e2 = eps * eps

    def coeffs(s):
        u = s - t0
        q = u * u + e2
        a = q ** (-0.5 * beta)
        a1 = -beta * u * a / q
        a2 = -beta * a / q * (1.0 - (beta + 2.0) * u * u / q)
        return a, a1, a2

    def H(x, s, l):
        a, _, _ = coeffs(s)
        x, l = x[:, 0], l[:, 0]
        return l * x * a - 0.25 * l * l * a * a

    def grad(x, s, l):
        a, a1, _ = coeffs(s)
        x, l = x[:, 0], l[:, 0]
        hx = l * a
        hs = l * x * a1 - 0.5 * l * l * a * a1
        hl = x * a - 0.5 * l * a * a
        return _col(hx), hs, _col(hl)

    def hess(x, s, l):
        a, a1, a2 = coeffs(s)
        x, l = x[:, 0], l[:, 0]
        m = x.shape[0]
        hxx = np.zeros((m, 1, 1))
        hxs = (l * a1)[:, None]
        hss = l * x * a2 - 0.5 * l * l * (a1 * a1 + a * a2)
        hxl = _diag(a)
        hsl = (x * a1 - l * a * a1)[:, None]
        hll = _diag(-0.5 * a * a)
        return hxx, hxs, hss, hxl, hsl, hll

    def control(x, s, l):
        a, _, _ = coeffs(s)
        return x - 0.5 * l * a[:, None]

    base = TimeDependentHamiltonian(
        state_dim=1,
        H=H,
        grad=grad,
        hess=hess,
        terminal=lambda x: float((np.asarray(x)[0] - x_ref_T) ** 2),
        terminal_grad=lambda x: np.array([2.0 * (np.asarray(x)[0] - x_ref_T)]),
        terminal_hess=lambda x: np.array([[2.0]]),
        control_recovery=control,
    )
    params = {"eps": eps, "beta": beta, "t0": t0, "x_ref_T": x_ref_T, "x_ref_0": x_ref_0}
    return TimeDependentProblem(base, T, [x_ref_0], "singular", params)


def singular(eps: float = 1e-10, beta: float = 0.75) -> ProblemSpec:
    """Regularized singular problem, clock-augmented to state ``(x, s)``.

    The true minimum of the functional is 0, attained at ``X = a = X_ref``.
    """
    spec = augment_time(singular_base(eps, beta))
    return ProblemSpec(
        spec.hamiltonian, spec.horizon, spec.initial_state, "singular", spec.params,
        continuation=Continuation("eps", eps, "small", lambda e: singular(e, beta)),
        exact_value=0.0,
    )


def toy_drift(x0: float = 0.0, T: float = 1.0) -> ProblemSpec:
    """``H = lam`` (X' = 1, no running cost) and ``g(x) = x``."""

    def H(x, l):
        return l[:, 0].copy()

    def grad(x, l):
        return np.zeros_like(x), np.ones_like(l)

    def hess(x, l):
        z = np.zeros((x.shape[0], 1, 1))
        return z, z.copy(), z.copy()

    model = HamiltonianModel(
        1, H, grad, hess,
        terminal=lambda x: float(np.asarray(x)[0]),
        terminal_grad=lambda x: np.ones(1),
        terminal_hess=lambda x: np.zeros((1, 1)),
        control_recovery=lambda x, l: np.ones_like(l),
    )

    def lagrangian(x, beta):
        return np.where(np.abs(beta - 1.0) <= 1e-12, 0.0 * x, np.inf)

    return ProblemSpec(model, T, [x0], "toy_drift", {"x0": x0, "T": T},
                       lagrangian=lagrangian, exact_value=x0 + T)


def toy_drift_exact(mesh, x0: float = 0.0):
    t = mesh.nodes
    return x0 + t, np.ones_like(t)


def toy_quadratic(c: float = 1.0, T: float = 1.0) -> ProblemSpec:
    """``H = x^2`` (X' = 0, running cost x^2), ``g = 0``, ``X(0) = c``."""

    def H(x, l):
        return x[:, 0] ** 2

    def grad(x, l):
        return 2.0 * x, np.zeros_like(l)

    def hess(x, l):
        m = x.shape[0]
        return np.full((m, 1, 1), 2.0), np.zeros((m, 1, 1)), np.zeros((m, 1, 1))

    model = HamiltonianModel(
        1, H, grad, hess,
        terminal=lambda x: 0.0,
        terminal_grad=lambda x: np.zeros(1),
        terminal_hess=lambda x: np.zeros((1, 1)),
        control_recovery=lambda x, l: np.zeros_like(l),
    )

    def lagrangian(x, beta):
        return np.where(np.abs(beta) <= 1e-12, x * x, np.inf)

    return ProblemSpec(model, T, [c], "toy_quadratic", {"c": c, "T": T},
                       lagrangian=lagrangian, exact_value=c * c * T)


def toy_quadratic_exact(mesh, c: float = 1.0):
    t = mesh.nodes
    return np.full_like(t, c), 2.0 * c * (mesh.T - t)


REGISTRY = {
    "hyper_sensitive": (hyper_sensitive, ("gamma",)),
    "simple_control": (simple_control, ("delta",)),
    "singular": (singular, ("eps", "beta")),
    "toy_drift": (toy_drift, ("x0", "T")),
    "toy_quadratic": (toy_quadratic, ("c", "T")),
}


def build_problem(label: str, **params) -> ProblemSpec:
    try:
        factory, allowed = REGISTRY[label]
    except KeyError:
        raise KeyError(f"unknown problem {label!r}; choose from {sorted(REGISTRY)}") from None
    unknown = set(params) - set(allowed)
    if unknown:
        raise KeyError(f"unknown parameter(s) {sorted(unknown)} for {label}")
    return factory(**params)
