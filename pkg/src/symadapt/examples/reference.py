"""Reference path of the singular problem.

``X_ref(t) = exp(F(t))`` with ``F(t) = int_{t0}^t ((tau - t0)^2 + eps^2)^(-beta/2) dtau``.
The closed form involves 2F1 at argument ``-(t - t0)^2 / eps^2``, which for
tiny ``eps`` is hopeless to evaluate; instead the integral is computed with
the substitution ``tau - t0 = eps sinh(w)``, under which

    F = sign(t - t0) eps^(1 - beta) int_0^{asinh(|t - t0| / eps)} cosh(w)^(1 - beta) dw

and the integrand is smooth and monotone.
"""

from __future__ import annotations

import math

from scipy import integrate


class QuadratureError(ArithmeticError):
    def __init__(self, msg, achieved):
        super().__init__(msg)
        self.achieved = achieved


def singular_exponent(t: float, eps: float, beta: float, t0: float, rtol: float = 1e-10) -> float:
    """``F(t)``; the singular point ``t0`` is always a panel endpoint."""
    u = float(t) - float(t0)
    if u == 0.0:
        return 0.0
    wmax = math.asinh(abs(u) / eps)
    p = 1.0 - beta

    def f(w):
        return math.cosh(w) ** p

    # the integrand grows like exp(p w); split into unit panels in w so the
    # error control is relative to each panel's own magnitude
    edges = [0.0]
    while edges[-1] + 1.0 < wmax:
        edges.append(edges[-1] + 1.0)
    edges.append(wmax)
    total = 0.0
    err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        res = integrate.quad(f, a, b, epsabs=0.0, epsrel=rtol * 1e-2, limit=200, full_output=1)
        total += res[0]
        err += res[1]
        if len(res) > 3:
            raise QuadratureError(f"quad did not converge on [{a}, {b}]: {res[3]}", res[1])
    if err > rtol * abs(total):
        raise QuadratureError(f"quadrature relative error {err / abs(total):.2e} > {rtol:g}", err)
    return math.copysign(eps**p * total, u)


def reference_singular(t: float, eps: float = 1e-10, beta: float = 0.75, t0: float = 5.0 / 3.0,
                       rtol: float = 1e-10) -> float:
    return math.exp(singular_exponent(t, eps, beta, t0, rtol))
