import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltabptt.tensor import (
    DimensionError,
    NumericError,
    activation,
    activation_deriv,
    finite_difference_grad,
    matvec,
    seeded_rng,
    uniform_init,
)


def loop_matvec(W, v):
    out = [0.0] * len(W)
    for i, row in enumerate(W):
        for j, w in enumerate(row):
            out[i] += w * v[j]
    return np.array(out)


def test_matvec_identity():
    np.testing.assert_array_equal(matvec(np.eye(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


def test_matvec_zero_matrix():
    assert np.all(matvec(np.zeros((2, 5)), np.arange(5.0)) == 0.0)


def test_matvec_matches_scalar_loop():
    rng = np.random.default_rng(3)
    W = rng.normal(size=(4, 4))
    v = rng.normal(size=4)
    # ascending-column accumulation is the same order as the loop
    np.testing.assert_array_equal(matvec(W, v), loop_matvec(W, v))


def test_matvec_dimension_error():
    with pytest.raises(DimensionError):
        matvec(np.zeros((3, 4)), np.zeros(3))
    with pytest.raises(DimensionError):
        matvec(np.zeros(4), np.zeros(4))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**31))
def test_matvec_distributes(rows, cols, seed):
    rng = np.random.default_rng(seed)
    W = rng.uniform(-1, 1, size=(rows, cols))
    a, b = rng.uniform(-1, 1, size=(2, cols))
    np.testing.assert_allclose(matvec(W, a + b), matvec(W, a) + matvec(W, b), atol=1e-12, rtol=0)


def test_activation_fixed_points():
    assert activation("tanh", np.array([0.0]))[0] == 0.0
    assert activation_deriv("tanh", np.array([0.0]))[0] == 1.0
    assert activation("sigmoid", np.array([0.0]))[0] == 0.5
    assert activation_deriv("sigmoid", np.array([0.0]))[0] == 0.25


def test_sigmoid_extremes_do_not_overflow():
    with np.errstate(over="raise"):
        y = activation("sigmoid", np.array([-1000.0, 1000.0]))
    np.testing.assert_array_equal(y, [0.0, 1.0])


def test_unknown_activation():
    with pytest.raises(ValueError):
        activation("relu", np.zeros(2))


def _central(kind, x, eps=1e-5):
    return (activation(kind, x + eps) - activation(kind, x - eps)) / (2 * eps)


def test_tanh_deriv_vs_fd_at_037():
    x = np.array([0.37])
    assert abs(activation_deriv("tanh", x)[0] - _central("tanh", x)[0]) < 1e-8


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=8), st.sampled_from(["tanh", "sigmoid"]))
def test_activation_deriv_matches_fd(xs, kind):
    x = np.array(xs)
    np.testing.assert_allclose(activation_deriv(kind, x), _central(kind, x), atol=1e-8, rtol=0)


def test_fd_sum_of_squares():
    g = finite_difference_grad(lambda x: float(np.sum(x**2)), [1.0, 2.0])
    np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-6)


def test_fd_constant():
    assert np.all(finite_difference_grad(lambda x: 7.0, np.ones(3)) == 0.0)


def test_fd_errors():
    with pytest.raises(ValueError):
        finite_difference_grad(lambda x: 0.0, [1.0], eps=0.0)
    with pytest.raises(NumericError):
        finite_difference_grad(lambda x: float("nan"), [1.0])


@pytest.mark.parametrize("seed", [0, 1, 42])
def test_seeded_init_reproducible(seed):
    a = uniform_init(seeded_rng(seed), 5, 9)
    b = uniform_init(seeded_rng(seed), 5, 9)
    np.testing.assert_array_equal(a, b)
    assert np.max(np.abs(a)) <= 1.0 / 3.0


def test_different_seeds_differ():
    assert not np.array_equal(uniform_init(seeded_rng(0), 4, 4), uniform_init(seeded_rng(1), 4, 4))
