"""Dense linear-algebra substrate.

Vectors and matrices are plain numpy arrays (1-D and 2-D, row-major). The
helpers here add the dimension checks, the fixed accumulation order and the
finite-difference utility that the rest of the package leans on.
"""

import math

import numpy as np

DEFAULT_DTYPE = np.float64


class DimensionError(ValueError):
    """Operand shapes do not line up."""


class NumericError(ArithmeticError):
    """A quantity that must be finite is not."""


class ConfigError(ValueError):
    """Invalid configuration or hyperparameter."""


def float_dtype(x):
    """dtype of ``x`` if it is already floating point, else the default."""
    dt = np.asarray(x).dtype
    return dt if np.issubdtype(dt, np.floating) else np.dtype(DEFAULT_DTYPE)


def as_vector(v, dtype=None):
    arr = np.asarray(v, dtype=dtype or DEFAULT_DTYPE)
    if arr.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {arr.shape}")
    return arr


def as_matrix(W, dtype=None):
    arr = np.asarray(W, dtype=dtype or DEFAULT_DTYPE)
    if arr.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {arr.shape}")
    return arr


def check_finite(arr, what="array"):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")
    return arr


def column_accumulate(W, cols, vals):
    """Return ``sum_k W[:, cols[k]] * vals[k]`` accumulated in the order of ``cols``.

    The gathered columns are laid out as rows of a C-contiguous block and
    reduced along axis 0, which numpy performs as a sequential running sum.
    Dense and sparse products therefore share one summation order.
    """
    if len(cols) == 0:
        return np.zeros(W.shape[0], dtype=W.dtype)
    block = W.T[cols] * vals[:, None]
    return np.add.reduce(block, axis=0)


def matvec(W, v):
    """Dense ``W @ v`` with ascending-column accumulation."""
    W = as_matrix(W, dtype=float_dtype(W))
    v = as_vector(v, dtype=float_dtype(v))
    if W.shape[1] != v.shape[0]:
        raise DimensionError(f"matvec: W is {W.shape}, v has length {v.shape[0]}")
    return column_accumulate(W, np.arange(W.shape[1]), v)


def sigmoid(z):
    # split on sign so neither branch overflows
    z = np.asarray(z)
    out = np.empty_like(z, dtype=np.result_type(z, np.float32))
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


_ACTIVATIONS = {"tanh", "sigmoid"}


def activation(kind, v):
    if kind == "tanh":
        return np.tanh(v)
    if kind == "sigmoid":
        return sigmoid(v)
    raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}")


def activation_deriv(kind, pre_activation):
    """Derivative of ``activation(kind, .)`` evaluated at the pre-activation."""
    y = activation(kind, pre_activation)
    if kind == "tanh":
        return 1.0 - y * y
    return y * (1.0 - y)


def finite_difference_grad(f, x, eps=1e-6):
    """Central-difference gradient of the scalar function ``f`` at ``x``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=DEFAULT_DTYPE)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NumericError(f"f is not finite near coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def seeded_rng(seed):
    return np.random.default_rng(seed)


def uniform_init(rng, rows, cols, bound=None, dtype=DEFAULT_DTYPE):
    """U(-bound, bound) matrix; ``bound`` defaults to 1/sqrt(fan_in)."""
    if bound is None:
        bound = 1.0 / math.sqrt(cols)
    return rng.uniform(-bound, bound, size=(rows, cols)).astype(dtype)
