import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symadapt.examples import hyper_sensitive, simple_control, singular, toy_drift, toy_quadratic
from symadapt.mesh import uniform_mesh
from symadapt.problem import (
    EvaluationError,
    HamiltonianModel,
    ProblemSpec,
    UnsupportedOperation,
    augment_time,
    eval_grad_H,
    eval_H,
    eval_hess_H,
    fd_hess,
    from_autonomous,
    recover_control,
    regularize_abs,
    terminal_hessian,
)
from symadapt.solver import solve_newton


def affine_model(a=0.3, b=-1.2, c=0.7):
    return HamiltonianModel(
        1,
        H=lambda x, l: a * x[:, 0] + b * l[:, 0] + c,
        grad=lambda x, l: (np.full_like(x, a), np.full_like(l, b)),
        hess=lambda x, l: (np.zeros((len(x), 1, 1)),) * 3,
        terminal=lambda x: 0.0,
        terminal_grad=lambda x: np.zeros(1),
    )


class TestEvaluation:
    def test_hyper_H_at_origin(self):
        assert eval_H(hyper_sensitive().hamiltonian, [0.0], [0.0]) == 0.0

    def test_hyper_H_at_one(self):
        assert eval_H(hyper_sensitive().hamiltonian, [1.0], [0.0]) == 1.0

    def test_simple_H_at_origin_is_minus_delta(self):
        assert eval_H(simple_control(1e-10).hamiltonian, [0.0], [0.0]) == pytest.approx(-1e-10, rel=1e-12)

    def test_hyper_grad(self):
        hx, hl = eval_grad_H(hyper_sensitive().hamiltonian, [1.0], [0.0])
        assert hx == pytest.approx([2.0]) and hl == pytest.approx([-1.0])
        hx, hl = eval_grad_H(hyper_sensitive().hamiltonian, [0.0], [0.0])
        assert np.all(hx == 0) and np.all(hl == 0)

    def test_simple_grad(self):
        hx, hl = eval_grad_H(simple_control(1e-10).hamiltonian, [0.5], [1.0])
        assert hx[0] == pytest.approx(10 * 0.5**9, rel=1e-14)
        assert hl[0] == pytest.approx(-1.0, rel=1e-15)

    def test_hyper_hess(self):
        hxx, hxl, hll = eval_hess_H(hyper_sensitive().hamiltonian, [1.0], [0.0])
        assert (hxx[0, 0], hxl[0, 0], hll[0, 0]) == (2.0, -3.0, -0.5)

    def test_affine_hess_zero(self):
        blocks = eval_hess_H(affine_model(), [0.4], [-2.0])
        assert all(np.all(b == 0) for b in blocks)

    def test_simple_curvature_of_order_inverse_delta(self):
        _, _, hll = eval_hess_H(simple_control(1e-3).hamiltonian, [0.0], [0.0])
        assert hll[0, 0] == pytest.approx(-1000.0, rel=1e-12)

    def test_batched_shapes(self):
        m = singular().hamiltonian
        x = np.array([[1.0, 0.5], [1.2, 3.0], [0.9, 2.0]])
        lam = np.ones((3, 2))
        assert eval_H(m, x, lam).shape == (3,)
        hx, hl = eval_grad_H(m, x, lam)
        assert hx.shape == hl.shape == (3, 2)
        assert all(b.shape == (3, 2, 2) for b in eval_hess_H(m, x, lam))

    def test_non_finite_raises_with_arguments(self):
        m = HamiltonianModel(
            1, H=lambda x, l: np.log(x[:, 0]), grad=lambda x, l: (1 / x, 0 * l), hess=None,
            terminal=lambda x: 0.0, terminal_grad=lambda x: np.zeros(1),
        )
        with pytest.raises(EvaluationError) as info:
            eval_H(m, np.array([[1.0], [-1.0]]), np.zeros((2, 1)))
        assert info.value.index == 1
        assert info.value.x.tolist() == [-1.0]

    def test_missing_hess_falls_back_to_differences(self):
        base = hyper_sensitive().hamiltonian
        m = HamiltonianModel(1, base.H, base.grad, None, base.terminal, base.terminal_grad)
        a = eval_hess_H(m, [0.7], [0.3])
        b = eval_hess_H(base, [0.7], [0.3])
        for u, v in zip(a, b):
            np.testing.assert_allclose(u, v, rtol=1e-7, atol=1e-8)

    def test_fd_hess_matches_analytic(self):
        m = hyper_sensitive().hamiltonian
        x, lam = np.array([[0.3], [-1.1]]), np.array([[2.0], [0.5]])
        for u, v in zip(fd_hess(m, x, lam), m.hess(x, lam)):
            np.testing.assert_allclose(u, v, rtol=1e-7, atol=1e-8)

    def test_terminal_hessian_by_differences(self):
        base = hyper_sensitive(gamma=3.0).hamiltonian
        m = HamiltonianModel(1, base.H, base.grad, base.hess, base.terminal, base.terminal_grad)
        assert terminal_hessian(m, np.array([0.2]))[0, 0] == pytest.approx(6.0, rel=1e-6)
        assert terminal_hessian(base, np.array([0.2]))[0, 0] == 6.0


class TestControlRecovery:
    def test_hyper(self):
        assert recover_control(hyper_sensitive().hamiltonian, [0.3], [1.4])[0] == pytest.approx(-0.7)

    def test_simple_saturated(self):
        assert recover_control(simple_control().hamiltonian, [0.5], [1.0])[0] == pytest.approx(-1.0)

    def test_simple_tie_returns_zero(self):
        assert recover_control(simple_control().hamiltonian, [0.5], [0.0])[0] == 0.0

    def test_unsupported(self):
        with pytest.raises(UnsupportedOperation):
            recover_control(affine_model(), [0.0], [0.0])


class TestRegularizeAbs:
    def test_values(self):
        r = regularize_abs(1e-10)
        assert r.value(0.0) == pytest.approx(1e-10) and r.d1(0.0) == 0.0
        assert regularize_abs(1.0).d2(0.0) == 1.0

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            regularize_abs(0.0)
        with pytest.raises(ValueError):
            regularize_abs(-1.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-12, 10.0), st.floats(-1e6, 1e6))
    def test_distance_bounded_by_delta(self, delta, z):
        gap = regularize_abs(delta).value(z) - abs(z)
        assert -1e-9 * max(1.0, abs(z)) <= gap <= delta * (1 + 1e-12)

    def test_large_argument_limit(self):
        r = regularize_abs(0.5)
        gaps = [r.value(z) - z for z in (1e1, 1e2, 1e3)]
        assert all(g > 0 for g in gaps) and gaps[0] > gaps[1] > gaps[2]


class TestProblemSpec:
    def test_rejects_bad_horizon(self):
        with pytest.raises(ValueError):
            ProblemSpec(affine_model(), 0.0, [0.0], "x")

    def test_rejects_bad_initial_state(self):
        with pytest.raises(ValueError):
            ProblemSpec(affine_model(), 1.0, [0.0, 1.0], "x")

    def test_initial_state_read_only(self):
        p = ProblemSpec(affine_model(), 1.0, [0.0], "x")
        with pytest.raises(ValueError):
            p.initial_state[0] = 1.0


class TestAugmentTime:
    def test_singular_hamiltonian_form(self):
        p = singular(eps=1e-10, beta=0.75)
        t0 = p.params["t0"]
        x = np.array([[1.3, 0.4]])
        lam = np.array([[0.7, -0.2]])
        q = (0.4 - t0) ** 2 + 1e-20
        want = 0.7 * 1.3 / q**0.375 - 0.49 / (4 * q**0.75) - 0.2
        assert eval_H(p.hamiltonian, x, lam)[0] == pytest.approx(want, rel=1e-14)

    def test_coefficient_at_singular_time(self):
        p = singular(eps=1e-10, beta=0.75)
        t0 = p.params["t0"]
        # with lam_1 = 1 and x = 1 the first term is exactly 1 / eps^beta
        x = np.array([[1.0, t0]])
        lam = np.array([[1e-30, 0.0]])
        h = eval_H(p.hamiltonian, x, lam)[0]
        assert h / 1e-30 == pytest.approx(1e-10 ** -0.75, rel=1e-12)

    def test_clock_slot_of_H_lam_is_one(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 3, (20, 2))
        lam = rng.normal(size=(20, 2))
        _, hl = eval_grad_H(singular().hamiltonian, x, lam)
        assert np.all(hl[:, 1] == 1.0)

    def test_terminal_ignores_clock(self):
        m = singular().hamiltonian
        assert m.terminal(np.array([1.0, 0.0])) == m.terminal(np.array([1.0, 3.0]))
        assert m.terminal_grad(np.array([1.0, 2.0]))[1] == 0.0

    @pytest.mark.parametrize("factory", [hyper_sensitive, toy_quadratic])
    def test_autonomous_augmentation_identity(self, factory):
        base = factory()
        aug = augment_time(from_autonomous(base))
        mesh = uniform_mesh(base.horizon, 50)
        t1, _ = solve_newton(base, mesh)
        t2, _ = solve_newton(aug, mesh)
        np.testing.assert_allclose(t2.X[:, 1], mesh.nodes, rtol=0, atol=1e-14)
        np.testing.assert_allclose(t2.lam[:, 1], t2.lam[0, 1], rtol=0, atol=1e-14)
        np.testing.assert_allclose(t2.X[:, 0], t1.X[:, 0], atol=1e-9)
        np.testing.assert_allclose(t2.lam[:, 0], t1.lam[:, 0], atol=1e-9)


def test_models_are_stateless_under_repeated_evaluation():
    m = hyper_sensitive().hamiltonian
    x = np.linspace(-1, 1, 7)[:, None]
    lam = np.linspace(2, -2, 7)[:, None]
    a = eval_H(m, x, lam)
    eval_grad_H(m, x * 3, lam)
    assert np.array_equal(a, eval_H(m, x, lam))


def test_drift_affine_derivatives():
    m = toy_drift().hamiltonian
    hx, hl = eval_grad_H(m, [0.3], [2.0])
    assert hx[0] == 0.0 and hl[0] == 1.0
