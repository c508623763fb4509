import numpy as np
import pytest

from conftest import make_cell, make_stream
from deltabptt import autodiff as ad
from deltabptt.bptt import delta_backward
from deltabptt.cells import delta_forward
from deltabptt.oracle import (
    FD_REL_TOL,
    dense_masked_autodiff,
    fd_rel_error,
    linear_cost,
    masked_finite_difference,
)
from deltabptt.tensor import finite_difference_grad


def test_autodiff_matches_finite_differences():
    rng = np.random.default_rng(0)
    W0 = rng.normal(size=(3, 4))
    v = rng.normal(size=4)
    g = rng.normal(size=3)

    def f_np(W):
        z = np.tanh(W @ v)
        s = 1 / (1 + np.exp(-z[:2]))
        return float(np.dot(g[:2], s * z[1:]) + np.sum(z) - 0.5 * z[0])

    W = ad.Var(W0)
    z = ad.tanh(ad.matvec(W, v))
    s = ad.sigmoid(z[:2])
    out = ad.dot(g[:2], s * z[1:]) + ad.total([z[i] for i in range(3)]) - 0.5 * z[0]
    ad.backward(out)
    assert abs(float(out.value) - f_np(W0)) < 1e-14
    np.testing.assert_allclose(W.grad, finite_difference_grad(f_np, W0), atol=1e-8)


def test_autodiff_shared_subexpression_accumulates():
    x = ad.Var(np.array([2.0]))
    y = x * x + x
    ad.backward(ad.total([y[0]]))
    np.testing.assert_allclose(x.grad, [5.0])


def test_oracle_linear_cost_is_consistent(kind):
    p = make_cell(kind, 3, 4, seed=1)
    xs = make_stream(5, 3, seed=1)
    lg = np.random.default_rng(1).normal(size=(5, 4))
    cost, masks = linear_cost(p, xs, 0.1, lg)
    hs, _ = delta_forward(p, xs, 0.1)
    assert cost == pytest.approx(float(np.sum(hs * lg)), abs=1e-14)
    assert len(masks) == 5


@pytest.mark.parametrize("theta", [0.0, 0.1])
def test_finite_difference_agrees(kind, theta):
    p = make_cell(kind, 3, 4, seed=2)
    xs = make_stream(6, 3, seed=2)
    lg = np.random.default_rng(2).normal(size=(6, 4))
    _, tape = delta_forward(p, xs, theta)
    g = delta_backward(p, tape, lg)
    rep = masked_finite_difference(p, xs, theta, lg, g)
    assert rep.n_checked + len(rep.skipped) == p.Wx.size + p.Wh.size + p.b.size
    assert rep.pass_fraction >= 0.95
    assert rep.max_rel_error <= FD_REL_TOL or rep.pass_fraction < 1


def test_mask_flip_coordinates_are_skipped_not_passed():
    p = make_cell("rnn", 2, 3, seed=4)
    xs = make_stream(3, 2, seed=4)
    lg = np.ones((3, 3))
    hs, _ = delta_forward(p, xs, 0.0)
    # put the first hidden delta right on the threshold
    theta_h = abs(hs[0, 0]) - 1e-10
    _, tape = delta_forward(p, xs, 0.0, theta_h)
    g = delta_backward(p, tape, lg)
    coords = [("Wx", (0, 0)), ("b", (0,))]
    rep = masked_finite_difference(p, xs, 0.0, lg, g, theta_h=theta_h, coords=coords)
    assert [name for name, _ in rep.skipped] == ["Wx", "b"]
    assert rep.n_checked == 0


def test_fd_rel_error_floor():
    assert fd_rel_error(1.0, 1.0 + 1e-6) == pytest.approx(1e-6, rel=1e-5)
    # tiny gradients are judged against the floor, not their own size
    assert fd_rel_error(1e-9, 2e-9) == pytest.approx(1e-6)


def test_oracle_input_grads_optional():
    p = make_cell("lstm", 3, 2)
    xs = make_stream(4, 3)
    g = dense_masked_autodiff("lstm", p, xs, 0.05, np.ones((4, 2)))
    assert g.dx is None
    g = dense_masked_autodiff("lstm", p, xs, 0.05, np.ones((4, 2)), input_grads=True)
    assert g.dx.shape == (4, 3)
