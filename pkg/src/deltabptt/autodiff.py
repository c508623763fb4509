"""A small reverse-mode autodiff engine over numpy arrays.

Just enough operations to express RNN/LSTM/GRU graphs. Every node stores
its value and, per parent, a closure mapping the upstream gradient to that
parent's contribution. :func:`backward` walks the graph in reverse
topological order.
"""

import numpy as np


class Var:
    __slots__ = ("value", "parents", "grad")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value)
        self.parents = parents
        self.grad = None

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __getitem__(self, key):
        return getitem(self, key)

    def __repr__(self):
        return f"Var(shape={self.value.shape})"


def _val(a):
    return a.value if isinstance(a, Var) else np.asarray(a)


def _node(value, *edges):
    """Build a node from ``(parent, vjp)`` pairs, dropping constant parents."""
    return Var(value, tuple((p, fn) for p, fn in edges if isinstance(p, Var)))


def add(a, b):
    return _node(_val(a) + _val(b), (a, lambda g: g), (b, lambda g: g))


def sub(a, b):
    return _node(_val(a) - _val(b), (a, lambda g: g), (b, lambda g: -g))


def mul(a, b):
    av, bv = _val(a), _val(b)
    return _node(av * bv, (a, lambda g: g * bv), (b, lambda g: g * av))


def matvec(W, v):
    Wv, vv = _val(W), _val(v)
    return _node(Wv @ vv, (W, lambda g: np.outer(g, vv)), (v, lambda g: Wv.T @ g))


def dot(a, b):
    av, bv = _val(a), _val(b)
    return _node(np.dot(av, bv), (a, lambda g: g * bv), (b, lambda g: g * av))


def tanh(a):
    y = np.tanh(_val(a))
    return _node(y, (a, lambda g: g * (1.0 - y * y)))


def sigmoid(a):
    z = _val(a)
    y = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    return _node(y, (a, lambda g: g * y * (1.0 - y)))


def getitem(a, key):
    av = _val(a)

    def vjp(g):
        out = np.zeros_like(av)
        out[key] = g
        return out

    return _node(av[key], (a, vjp))


def total(vars_):
    """Sum of a list of scalar nodes."""
    out = vars_[0]
    for v in vars_[1:]:
        out = add(out, v)
    return out


def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p, _ in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root, seed=1.0):
    """Accumulate d(root)/d(node) into ``node.grad`` for every reachable node."""
    order = _toposort(root)
    for node in order:
        node.grad = None
    root.grad = np.asarray(seed, dtype=root.value.dtype) * np.ones_like(root.value)
    for node in reversed(order):
        if node.grad is None:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(node.grad)
            parent.grad = contrib if parent.grad is None else parent.grad + contrib
