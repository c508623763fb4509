"""Independent gradient references for the sparse backward pass.

* :func:`dense_masked_autodiff` rebuilds the delta forward graph with the
  autodiff engine. Threshold masks are computed from values and enter as
  constant multipliers; every product is dense, nothing is skipped.
* :func:`dense_reference_grads` differentiates the textbook cells (no
  deltas), the theta=0 baseline.
* :func:`masked_finite_difference` checks weight gradients numerically,
  skipping coordinates whose perturbation flips a mask bit.

The scalar cost is ``C = sum_t <g_t, h_t>`` for given ``g_t``, so that
``dL_t/dh_t = g_t`` is exactly the ``loss_grads`` fed to the sparse path.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .bptt import CellGrads
from .cells import delta_forward


def _threshold(cur, ret, theta):
    """Constant mask from values; the graph sees it as a fixed multiplier."""
    return (np.abs(cur.value - ret.value) > theta).astype(cur.value.dtype)


def _delta_graph(kind, Wx, Wh, b, xs, theta_x, theta_h, n_h):
    dt = Wx.value.dtype
    x_hat = ad.Var(np.zeros(xs[0].value.shape, dtype=dt))
    h_hat = ad.Var(np.zeros(n_h, dtype=dt))
    h = ad.Var(np.zeros(n_h, dtype=dt))
    c = ad.Var(np.zeros(n_h, dtype=dt))
    M = b
    M_ch = ad.Var(np.zeros(n_h, dtype=dt))
    n = n_h
    hs, masks = [], []
    for x in xs:
        mx = _threshold(x, x_hat, theta_x)
        mh = _threshold(h, h_hat, theta_h)
        masks.append((mx, mh))
        dx = (x - x_hat) * mx
        x_hat = x * mx + x_hat * (1.0 - mx)
        dh = (h - h_hat) * mh
        h_hat = h * mh + h_hat * (1.0 - mh)
        zx = ad.matvec(Wx, dx)
        zh = ad.matvec(Wh, dh)
        if kind == "gru":
            M = M + zx + _pad_gru(zh, n)
            M_ch = M_ch + zh[2 * n :]
            r = ad.sigmoid(M[:n])
            u = ad.sigmoid(M[n : 2 * n])
            cand = ad.tanh(M[2 * n :] + r * M_ch)
            h = (1.0 - u) * h + u * cand
        else:
            M = M + zx + zh
            if kind == "rnn":
                h = ad.tanh(M)
            else:
                i = ad.sigmoid(M[:n])
                f = ad.sigmoid(M[n : 2 * n])
                g = ad.tanh(M[2 * n : 3 * n])
                o = ad.sigmoid(M[3 * n :])
                c = f * c + i * g
                h = o * ad.tanh(c)
        hs.append(h)
    return hs, masks


def _pad_gru(zh, n):
    """Route the r/u rows of the hidden product into M; c rows go to M_ch instead."""
    keep = np.ones(3 * n)
    keep[2 * n :] = 0.0
    return zh * keep


def _textbook_graph(kind, Wx, Wh, b, xs, n_h):
    dt = Wx.value.dtype
    n = n_h
    h = ad.Var(np.zeros(n, dtype=dt))
    c = ad.Var(np.zeros(n, dtype=dt))
    hs = []
    for x in xs:
        zx = ad.matvec(Wx, x) + b
        zh = ad.matvec(Wh, h)
        if kind == "rnn":
            h = ad.tanh(zx + zh)
        elif kind == "lstm":
            z = zx + zh
            i = ad.sigmoid(z[:n])
            f = ad.sigmoid(z[n : 2 * n])
            g = ad.tanh(z[2 * n : 3 * n])
            o = ad.sigmoid(z[3 * n :])
            c = f * c + i * g
            h = o * ad.tanh(c)
        else:
            r = ad.sigmoid(zx[:n] + zh[:n])
            u = ad.sigmoid(zx[n : 2 * n] + zh[n : 2 * n])
            cand = ad.tanh(zx[2 * n :] + r * zh[2 * n :])
            h = (1.0 - u) * h + u * cand
        hs.append(h)
    return hs


def _run(build, params, xs, loss_grads, input_grads):
    Wx = ad.Var(params.Wx.copy())
    Wh = ad.Var(params.Wh.copy())
    b = ad.Var(params.b.copy())
    x_vars = [ad.Var(np.array(x, dtype=params.Wx.dtype)) for x in np.asarray(xs)]
    hs = build(Wx, Wh, b, x_vars)
    loss_grads = np.asarray(loss_grads, dtype=params.Wx.dtype)
    cost = ad.total([ad.dot(h, g) for h, g in zip(hs, loss_grads)])
    ad.backward(cost)
    z = np.zeros_like
    grads = CellGrads(
        Wx.grad if Wx.grad is not None else z(params.Wx),
        Wh.grad if Wh.grad is not None else z(params.Wh),
        b.grad if b.grad is not None else z(params.b),
    )
    if input_grads:
        grads.dx = np.stack([x.grad if x.grad is not None else z(x.value) for x in x_vars])
    return grads, np.stack([h.value for h in hs])


def dense_masked_autodiff(kind, params, xs, theta_x, loss_grads, theta_h=None, input_grads=False):
    """Gradients of the delta graph by dense reverse-mode differentiation."""
    if kind != params.kind:
        raise ValueError(f"params are for {params.kind!r}, not {kind!r}")
    theta_h = theta_x if theta_h is None else theta_h

    def build(Wx, Wh, b, x_vars):
        hs, _ = _delta_graph(kind, Wx, Wh, b, x_vars, theta_x, theta_h, params.n_h)
        return hs

    grads, _ = _run(build, params, xs, loss_grads, input_grads)
    return grads


def dense_reference_grads(kind, params, xs, loss_grads, input_grads=False):
    """Textbook BPTT gradients (no thresholding) by reverse-mode differentiation."""
    if kind != params.kind:
        raise ValueError(f"params are for {params.kind!r}, not {kind!r}")

    def build(Wx, Wh, b, x_vars):
        return _textbook_graph(kind, Wx, Wh, b, x_vars, params.n_h)

    grads, _ = _run(build, params, xs, loss_grads, input_grads)
    return grads


def linear_cost(params, xs, theta_x, loss_grads, theta_h=None):
    """``sum_t <g_t, h_t>`` through the delta forward, plus the masks it used."""
    hs, tape = delta_forward(params, xs, theta_x, theta_h, check_finite=False)
    masks = [(r.mask_x.bits.tobytes(), r.mask_h.bits.tobytes()) for r in tape.records]
    return float(np.sum(hs * loss_grads)), masks


@dataclass
class FDResult:
    name: str
    index: tuple
    analytic: float
    numeric: float
    rel_error: float
    passed: bool


@dataclass
class FDReport:
    checked: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    @property
    def n_checked(self):
        return len(self.checked)

    @property
    def n_passed(self):
        return sum(r.passed for r in self.checked)

    @property
    def pass_fraction(self):
        return self.n_passed / self.n_checked if self.checked else 0.0

    @property
    def max_rel_error(self):
        return max((r.rel_error for r in self.checked), default=0.0)


FD_REL_TOL = 1e-5
# gradients below this magnitude are compared at FD_REL_TOL * FD_SCALE_FLOOR absolute
FD_SCALE_FLOOR = 1e-3


def fd_rel_error(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), FD_SCALE_FLOOR)


def masked_finite_difference(
    params, xs, theta_x, loss_grads, analytic, theta_h=None, eps=1e-6, coords=None, rng=None,
    n_coords=None,
):
    """Central differences of the delta-forward cost w.r.t. weights.

    A coordinate is skipped (and listed in ``skipped``) when either
    perturbed forward pass produces a mask pattern different from the
    unperturbed one; the cost is not differentiable across a mask flip.

    ``coords`` is a list of ``(name, index)``; by default every entry of
    Wx, Wh and b, or ``n_coords`` of them drawn with ``rng``.
    """
    _, base_masks = linear_cost(params, xs, theta_x, loss_grads, theta_h)
    arrays = params.arrays()
    grads = analytic.arrays()
    if coords is None:
        coords = [(name, idx) for name, arr in arrays.items() for idx in np.ndindex(arr.shape)]
        if n_coords is not None and n_coords < len(coords):
            rng = rng or np.random.default_rng(0)
            pick = rng.choice(len(coords), size=n_coords, replace=False)
            coords = [coords[i] for i in sorted(pick)]
    report = FDReport()
    for name, idx in coords:
        arr = arrays[name]
        orig = arr[idx]
        arr[idx] = orig + eps
        fp, mp = linear_cost(params, xs, theta_x, loss_grads, theta_h)
        arr[idx] = orig - eps
        fm, mm = linear_cost(params, xs, theta_x, loss_grads, theta_h)
        arr[idx] = orig
        if mp != base_masks or mm != base_masks:
            report.skipped.append((name, idx))
            continue
        numeric = (fp - fm) / (2.0 * eps)
        a = float(grads[name][idx])
        err = fd_rel_error(a, numeric)
        report.checked.append(FDResult(name, idx, a, numeric, err, err <= FD_REL_TOL))
    return report
