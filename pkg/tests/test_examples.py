import csv
import math

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from symadapt.examples import (
    DpGrid,
    build_problem,
    dp_oracle_1d,
    exact_simple_trajectory,
    hyper_sensitive,
    reference_singular,
    simple_control,
    singular,
    toy_drift,
    toy_quadratic,
)
from symadapt.mesh import refine, uniform_mesh
from symadapt.problem import HamiltonianModel, ProblemSpec, eval_grad_H

T0 = 5.0 / 3.0


class TestHyper:
    def test_configuration(self):
        p = hyper_sensitive(1e6)
        assert (p.horizon, p.initial_state.tolist(), p.params) == (25.0, [1.0], {"gamma": 1e6})

    def test_grad_at_unit_point(self):
        hx, hl = eval_grad_H(hyper_sensitive().hamiltonian, np.array([[1.0]]), np.array([[0.0]]))
        assert (hx.item(), hl.item()) == (2.0, -1.0)

    @pytest.mark.parametrize("gamma", [1.0, 1e6])
    def test_terminal_grad_zero_at_one(self, gamma):
        assert hyper_sensitive(gamma).hamiltonian.terminal_grad(np.array([1.0])).tolist() == [0.0]

    def test_rejects_gamma(self):
        with pytest.raises(ValueError):
            hyper_sensitive(0.0)


class TestSimple:
    def test_configuration(self):
        p = simple_control(1e-10)
        assert p.horizon == 1.0 and p.initial_state.tolist() == [0.5] and p.params == {"delta": 1e-10}

    def test_exact_value(self):
        assert simple_control().exact_value == pytest.approx(4.43892e-5, rel=1e-5)
        assert simple_control().exact_value == 0.5**11 / 11

    def test_exact_path(self):
        np.testing.assert_array_equal(exact_simple_trajectory([0.0, 0.25, 0.5, 0.9]), [0.5, 0.25, 0.0, 0.0])

    def test_lagrangian(self):
        L = simple_control().lagrangian
        assert L(0.5, 1.0) == 0.5**10 and L(0.5, 1.5) == np.inf


class TestSingular:
    def test_configuration(self):
        p = singular(1e-10, 0.75)
        assert p.state_dim == 2 and p.horizon == 4.0
        assert p.params["eps"] == 1e-10 and p.params["beta"] == 0.75
        assert p.initial_state[0] == pytest.approx(reference_singular(0.0))
        assert p.initial_state[1] == 0.0
        assert p.exact_value == 0.0

    def test_clock_dual_derivative_is_one(self):
        p = singular()
        rng = np.random.default_rng(5)
        x = np.column_stack([rng.uniform(0, 3, 20), rng.uniform(0, 4, 20)])
        lam = rng.normal(size=(20, 2))
        _, hl = eval_grad_H(p.hamiltonian, x, lam)
        np.testing.assert_array_equal(hl[:, 1], 1.0)

    def test_factor_at_t0(self):
        # with lam = (1, 0) and x = 1 the x-part of H is a - a^2 / 4, a = eps^-beta
        eps, beta = 1e-3, 0.75
        p = singular(eps, beta)
        a = eps**-beta
        H = p.hamiltonian.H(np.array([[1.0, T0]]), np.array([[1.0, 0.0]]))
        assert np.asarray(H).item() == pytest.approx(a - 0.25 * a * a, rel=1e-12)

    @pytest.mark.parametrize("kw", [dict(eps=0.0), dict(beta=1.0), dict(beta=0.0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            singular(**kw)


class TestReferenceSingular:
    def test_at_t0(self):
        assert reference_singular(T0) == 1.0

    @pytest.mark.parametrize("t", [0.0, 1.0, 2.5, 4.0])
    def test_beta_to_zero(self, t):
        assert reference_singular(t, beta=1e-12) == pytest.approx(math.exp(t - T0), abs=1e-9)

    def test_large_eps_against_gauss_legendre(self):
        # composite 20-point Gauss-Legendre on 50 panels of [0, 1]
        x, w = leggauss(20)
        edges = np.linspace(0.0, 1.0, 51)
        F = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            tau = 0.5 * (b - a) * x + 0.5 * (a + b)
            F += 0.5 * (b - a) * np.sum(w * (tau * tau + 1.0) ** -0.375)
        assert reference_singular(T0 + 1.0, eps=1.0) == pytest.approx(math.exp(F), abs=1e-10)

    @pytest.mark.parametrize("t", [0.0, 1.6, 1.7, 4.0])
    def test_tolerance_tightening_is_stable(self, t):
        a = reference_singular(t, rtol=1e-10)
        b = reference_singular(t, rtol=1e-11)
        assert abs(a - b) < 1e-9

    def test_monotone(self):
        ts = np.linspace(0.0, 4.0, 41)
        v = [reference_singular(t) for t in ts]
        assert np.all(np.diff(v) > 0)


class TestDpOracle:
    def test_zero_problem(self):
        model = HamiltonianModel(
            1, H=lambda x, l: np.zeros(len(x)), grad=lambda x, l: (np.zeros_like(x), np.zeros_like(l)),
            hess=lambda x, l: (np.zeros((len(x), 1, 1)),) * 3,
            terminal=lambda x: 0.0, terminal_grad=lambda x: np.zeros(1),
        )
        p = ProblemSpec(model, 1.0, [0.0], "zero", lagrangian=lambda x, b: 0.0 * x * b)
        res = dp_oracle_1d(p, uniform_mesh(1.0, 5), DpGrid(-1, 1, 11, 5, -1, 1))
        assert np.all(res.values == 0) and res.values.shape == (6, 11)

    def test_drift_exact(self):
        p = toy_drift(x0=0.0, T=1.0)
        m = refine(uniform_mesh(1.0, 4), [True, False, True, False])
        # nodes 1/8 apart so every trial state lands on a grid point
        grid = DpGrid(-1.0, 2.0, 25, 3, 0.0, 2.0)
        res = dp_oracle_1d(p, m, grid)
        want = grid.x[None, :] + (1.0 - m.nodes[:, None])
        # only points whose forward path stays inside the grid are exact
        inside = grid.x[None, :] + (1.0 - m.nodes[:, None]) <= 2.0
        np.testing.assert_allclose(res.values[inside], want[inside], atol=1e-14)
        assert res.value_at(0.0) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.slow
    def test_simple_control_fine_grid(self):
        p = simple_control(1e-10)
        res = dp_oracle_1d(p, uniform_mesh(1.0, 200), DpGrid(-0.1, 0.6, 2001, 201, -1.0, 1.0))
        assert abs(res.value_at(0.5) - 0.5**11 / 11) < 2e-5

    def test_u_x_table(self):
        p = toy_quadratic(c=1.0)
        grid = DpGrid(-2.0, 2.0, 81, 3, -1e-3, 1e-3)
        res = dp_oracle_1d(p, uniform_mesh(1.0, 4), grid)
        # u(x, t) = x^2 (T - t) up to tiny control effects; u_x = 2 x (T - t)
        got = res.u_x_at([0.5, -1.0], [0, 2])
        np.testing.assert_allclose(got, [1.0, -1.0], atol=5e-3)

    def test_csv(self, tmp_path):
        res = dp_oracle_1d(toy_drift(), uniform_mesh(1.0, 2), DpGrid(-1, 2, 7, 3, 0, 2))
        path = tmp_path / "o.csv"
        res.to_csv(path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["x", "t", "u", "u_x"] and len(rows) == 1 + 3 * 7
        assert float(rows[1][2]) == res.values[0, 0]

    def test_refined_grid(self):
        g = DpGrid(0.0, 1.0, 11, 5, -1.0, 1.0).refined()
        assert (g.nx, g.n_beta, g.dx) == (21, 9, 0.05)

    @pytest.mark.parametrize("args", [(1, 0, 5, 5, -1, 1), (0, 1, 1, 5, -1, 1),
                                      (0, 1, 5, 1, -1, 1), (0, 1, 5, 5, 1, 1)])
    def test_grid_validation(self, args):
        with pytest.raises(ValueError):
            DpGrid(*args)

    def test_rejects_two_dimensional(self):
        with pytest.raises(ValueError):
            dp_oracle_1d(singular(), uniform_mesh(4.0, 2), DpGrid(0, 1, 5, 5, -1, 1))

    def test_rejects_missing_lagrangian(self):
        p = hyper_sensitive()
        p2 = ProblemSpec(p.hamiltonian, p.horizon, p.initial_state, "nolag")
        with pytest.raises(ValueError):
            dp_oracle_1d(p2, uniform_mesh(25.0, 2), DpGrid(0, 1, 5, 5, -1, 1))


class TestBuildProblem:
    def test_known(self):
        assert build_problem("hyper_sensitive", gamma=10.0).params == {"gamma": 10.0}

    def test_unknown_label(self):
        with pytest.raises(KeyError):
            build_problem("nope")

    def test_unknown_param(self):
        with pytest.raises(KeyError):
            build_problem("toy_drift", gamma=1.0)
