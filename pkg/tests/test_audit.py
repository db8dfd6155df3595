import numpy as np
import pytest

from symadapt.audit import SINGULAR_GAP, audit_model, fd_grad, jacobian_error, sample_points
from symadapt.examples import REGISTRY, hyper_sensitive, singular


@pytest.mark.parametrize("label", sorted(REGISTRY))
def test_shipped_models_pass(label):
    rep = audit_model(REGISTRY[label][0](), n_points=100, seed=0)
    assert rep.passed, rep.to_dict()
    assert set(rep.errors) == {"grad_x", "grad_lam", "hess_xx", "hess_xlam", "hess_lamx_T",
                               "hess_lamlam", "terminal_grad", "jacobian"}


def test_detects_wrong_gradient():
    p = hyper_sensitive()
    good = p.hamiltonian.grad
    bad = type(p.hamiltonian)(**{**vars(p.hamiltonian), "grad": lambda x, l: (good(x, l)[0] * 1.01, good(x, l)[1])})
    rep = audit_model(type(p)(**{**vars(p), "hamiltonian": bad}), n_points=20)
    assert not rep.passed and "grad_x" in rep.failures()


def test_singular_samples_avoid_t0():
    p = singular()
    x, _ = sample_points(p, 500, np.random.default_rng(0))
    assert np.all(np.abs(x[:, 1] - p.params["t0"]) >= SINGULAR_GAP - 1e-15)


def test_fd_grad_exact_on_quadratic():
    p = hyper_sensitive()
    x = np.array([[0.3], [-0.7]])
    lam = np.array([[0.1], [2.0]])
    gx, gl = fd_grad(p, x, lam)
    hx, hl = p.hamiltonian.grad(x, lam)
    np.testing.assert_allclose(gl, hl, atol=1e-10)
    np.testing.assert_allclose(gx, hx, atol=1e-9)


def test_jacobian_error_small():
    assert jacobian_error(hyper_sensitive(), 4, np.random.default_rng(1)) < 1e-6


def test_report_dict():
    d = audit_model(hyper_sensitive(), n_points=5, jacobian_iterates=1).to_dict()
    assert d["passed"] and d["points"] == 5 and d["tolerance"]["grad_x"] == 1e-6
