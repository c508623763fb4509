"""Masked backpropagation through time for delta cells.

The backward pass reuses the forward masks as-is. Its only matrix work is
two column-skipping kernels per stream and timestep (the transposed MxV for
delta-input gradients and the outer-product weight-gradient accumulation);
everything else is elementwise.

Adjoint bookkeeping for a hidden stream, with ``m_t`` the mask that encoded
h_t and ``g_t`` the (masked) gradient of the loss w.r.t. the delta of h_t::

    dC/dh_t       = (dC/dhhat_t + g_t) * m_t + dL_t/dh_t   [+ GRU direct path]
    dC/dhhat_{t-1} = dC/dhhat_t * (1 - m_t) - g_t * m_t

The same recurrence gives input-stream gradients when requested.
"""

from dataclasses import dataclass

import numpy as np

from .kernels import sparse_input_grad, sparse_weight_grad_accum
from .tensor import DimensionError, NumericError, activation_deriv


@dataclass
class CellGrads:
    dWx: np.ndarray
    dWh: np.ndarray
    db: np.ndarray
    # (T, n_x) gradients w.r.t. the input stream, when requested
    dx: np.ndarray = None

    @classmethod
    def zeros_like(cls, params):
        return cls(np.zeros_like(params.Wx), np.zeros_like(params.Wh), np.zeros_like(params.b))

    def arrays(self):
        return {"Wx": self.dWx, "Wh": self.dWh, "b": self.db}

    def add_(self, other):
        self.dWx += other.dWx
        self.dWh += other.dWh
        self.db += other.db
        return self

    def scale_(self, s):
        self.dWx *= s
        self.dWh *= s
        self.db *= s
        return self


@dataclass
class BackwardCarry:
    """Adjoints flowing from step t+1 into step t."""

    dM: np.ndarray
    d_hhat: np.ndarray
    d_xhat: np.ndarray
    # gradient w.r.t. the delta of h_t, from step t+1's input-gradient kernel
    d_delta_h: object = None
    # LSTM: dC/dc_{t+1} * f_{t+1}
    dc: np.ndarray = None
    # GRU: hidden-path candidate memory and the direct (1 - u_{t+1}) path
    dM_ch: np.ndarray = None
    dh_direct: np.ndarray = None

    @classmethod
    def zeros(cls, kind, n_x, n_h, G, dtype):
        z = lambda n: np.zeros(n, dtype=dtype)  # noqa: E731
        return cls(
            dM=z(G * n_h),
            d_hhat=z(n_h),
            d_xhat=z(n_x),
            dc=z(n_h) if kind == "lstm" else None,
            dM_ch=z(n_h) if kind == "gru" else None,
            dh_direct=z(n_h) if kind == "gru" else None,
        )


def _rnn_local(params, rec, dh, carry):
    carry.dM = dh * activation_deriv("tanh", rec.M) + carry.dM
    return carry.dM, carry.dM


def _lstm_local(params, rec, dh, carry):
    a = rec.acts
    i, f, g, o = a["i"], a["f"], a["g"], a["o"]
    dc = dh * o * (1.0 - a["tanh_c"] ** 2) + carry.dc
    local = np.concatenate(
        [
            dc * g * i * (1.0 - i),
            dc * a["c_prev"] * f * (1.0 - f),
            dc * i * (1.0 - g * g),
            dh * a["tanh_c"] * o * (1.0 - o),
        ]
    )
    carry.dc = dc * f
    carry.dM = local + carry.dM
    return carry.dM, carry.dM


def _gru_local(params, rec, dh, carry):
    a = rec.acts
    r, u, cand = a["r"], a["u"], a["cand"]
    dMc = dh * u * (1.0 - cand * cand)
    local = np.concatenate(
        [
            dMc * a["M_ch"] * r * (1.0 - r),
            dh * (cand - rec.h_prev) * u * (1.0 - u),
            dMc,
        ]
    )
    carry.dM = local + carry.dM
    carry.dM_ch = dMc * r + carry.dM_ch
    carry.dh_direct = dh * (1.0 - u)
    n = params.n_h
    dMh = np.concatenate([carry.dM[: 2 * n], carry.dM_ch])
    return carry.dM, dMh


_LOCAL = {"rnn": _rnn_local, "lstm": _lstm_local, "gru": _gru_local}


def delta_backward(params, tape, loss_grads, ledger=None, input_grads=True):
    """Gradients of ``C = sum_t L_t`` given ``dL_t/dh_t`` for every step.

    ``loss_grads`` has shape ``(T, n_h)``. With ``input_grads`` the
    transposed kernel also runs on the input stream and ``CellGrads.dx``
    holds dC/dx_t.
    """
    if tape.kind != params.kind:
        raise ValueError(f"tape is for {tape.kind!r}, params for {params.kind!r}")
    T = len(tape)
    if T < 1:
        raise ValueError("empty tape")
    loss_grads = np.asarray(loss_grads, dtype=params.Wx.dtype)
    if loss_grads.shape != (T, params.n_h):
        raise DimensionError(f"loss_grads must be ({T}, {params.n_h}), got {loss_grads.shape}")

    local_fn = _LOCAL[params.kind]
    grads = CellGrads.zeros_like(params)
    dxs = np.zeros((T, params.n_x), dtype=params.Wx.dtype) if input_grads else None
    carry = BackwardCarry.zeros(
        params.kind, params.n_x, params.n_h, params.gates, params.Wx.dtype
    )
    records = tape.records
    tx, th = f"{tape.tag}x", f"{tape.tag}h"

    for k in range(T - 1, -1, -1):
        rec = records[k]
        dh = loss_grads[k].copy()
        if k + 1 < T:
            # h_t was encoded at step t+1 with that step's hidden mask
            idx = records[k + 1].mask_h.indices()
            g = carry.d_delta_h.nzvl
            dh[idx] += carry.d_hhat[idx] + g
            carry.d_hhat[idx] = -g
            if carry.dh_direct is not None:
                dh += carry.dh_direct

        dMx, dMh = local_fn(params, rec, dh, carry)

        sparse_weight_grad_accum(grads.dWx, dMx, rec.dx, ledger, tx, k)
        sparse_weight_grad_accum(grads.dWh, dMh, rec.dh, ledger, th, k)
        carry.d_delta_h = sparse_input_grad(params.Wh, dMh, rec.mask_h, ledger, th, k)
        if input_grads:
            gx = sparse_input_grad(params.Wx, dMx, rec.mask_x, ledger, tx, k)
            idx = gx.nzil
            dxs[k, idx] = carry.d_xhat[idx] + gx.nzvl
            carry.d_xhat[idx] = -gx.nzvl

    # M_0 = b, and M_1 depends on M_0 only through the direct path
    grads.db = carry.dM.copy()
    grads.dx = dxs
    for arr in (grads.dWx, grads.dWh, grads.db):
        if not np.all(np.isfinite(arr)):
            raise NumericError("non-finite gradient in delta backward")
    return grads


def delta_rnn_backward(params, tape, loss_grads, ledger=None, input_grads=True):
    if params.kind != "rnn":
        raise ValueError("delta_rnn_backward needs rnn params")
    return delta_backward(params, tape, loss_grads, ledger, input_grads)


def delta_lstm_backward(params, tape, loss_grads, ledger=None, input_grads=True):
    if params.kind != "lstm":
        raise ValueError("delta_lstm_backward needs lstm params")
    return delta_backward(params, tape, loss_grads, ledger, input_grads)


def delta_gru_backward(params, tape, loss_grads, ledger=None, input_grads=True):
    if params.kind != "gru":
        raise ValueError("delta_gru_backward needs gru params")
    return delta_backward(params, tape, loss_grads, ledger, input_grads)
