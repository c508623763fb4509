"""Delta RNN / LSTM / GRU forward passes and the textbook dense cells.

Weights are stored gate-concatenated: one ``(G*n_h, n_x)`` input matrix and
one ``(G*n_h, n_h)`` hidden matrix per cell, so a single walk over a delta
vector's NZIL feeds every gate. Gate order is ``h`` for the RNN,
``i, f, g, o`` for the LSTM and ``r, u, c`` for the GRU.
"""

from dataclasses import dataclass, field

import numpy as np

from .codec import delta_encode
from .kernels import sparse_matvec
from .tensor import (
    DimensionError,
    NumericError,
    activation,
    as_vector,
    matvec,
    sigmoid,
    uniform_init,
)

GATES = {"rnn": ("h",), "lstm": ("i", "f", "g", "o"), "gru": ("r", "u", "c")}


def num_gates(kind):
    try:
        return len(GATES[kind])
    except KeyError:
        raise ValueError(f"unknown cell kind {kind!r}; expected one of {sorted(GATES)}") from None


@dataclass
class CellParams:
    kind: str
    Wx: np.ndarray
    Wh: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        G = num_gates(self.kind)
        rows = self.Wx.shape[0]
        if rows % G or self.Wh.shape[0] != rows or self.b.shape != (rows,):
            raise DimensionError("gate matrices must share G*n_h rows")
        if self.Wh.shape[1] != rows // G:
            raise DimensionError("Wh must have n_h columns")

    @classmethod
    def init(cls, kind, n_x, n_h, rng, dtype=np.float64):
        G = num_gates(kind)
        Wx = uniform_init(rng, G * n_h, n_x, dtype=dtype)
        Wh = uniform_init(rng, G * n_h, n_h, dtype=dtype)
        b = uniform_init(rng, 1, G * n_h, bound=1.0 / np.sqrt(n_h), dtype=dtype)[0]
        return cls(kind, Wx, Wh, b)

    @property
    def n_x(self):
        return self.Wx.shape[1]

    @property
    def n_h(self):
        return self.Wh.shape[1]

    @property
    def gates(self):
        return num_gates(self.kind)

    def gate(self, name):
        """Row slice of the concatenated layout belonging to gate ``name``."""
        k = GATES[self.kind].index(name)
        return slice(k * self.n_h, (k + 1) * self.n_h)

    def arrays(self):
        return {"Wx": self.Wx, "Wh": self.Wh, "b": self.b}

    def copy(self):
        return CellParams(self.kind, self.Wx.copy(), self.Wh.copy(), self.b.copy())

    def astype(self, dtype):
        return CellParams(self.kind, self.Wx.astype(dtype), self.Wh.astype(dtype), self.b.astype(dtype))

    def kernel_shapes(self, tag=""):
        rows = self.gates * self.n_h
        return {f"{tag}x": (rows, self.n_x), f"{tag}h": (rows, self.n_h)}


@dataclass
class DeltaCellState:
    x_hat: np.ndarray
    h_hat: np.ndarray
    h: np.ndarray
    M: np.ndarray
    # GRU candidate hidden-path memory; its bias lives in the c rows of M
    M_ch: np.ndarray = None
    # LSTM cell state
    c: np.ndarray = None

    @classmethod
    def initial(cls, params):
        dt = params.Wx.dtype
        n_h = params.n_h
        return cls(
            x_hat=np.zeros(params.n_x, dtype=dt),
            h_hat=np.zeros(n_h, dtype=dt),
            h=np.zeros(n_h, dtype=dt),
            M=params.b.copy(),
            M_ch=np.zeros(n_h, dtype=dt) if params.kind == "gru" else None,
            c=np.zeros(n_h, dtype=dt) if params.kind == "lstm" else None,
        )


@dataclass
class StepRecord:
    """What backward needs from one timestep.

    ``mask_h``/``dh`` belong to the encoding of the previous hidden state
    h_{t-1}; ``mask_x``/``dx`` to x_t. ``M`` is the gate memory snapshot
    after the update (for the GRU its c rows are the input-path memory).
    """

    t: int
    mask_x: object
    dx: object
    mask_h: object
    dh: object
    M: np.ndarray
    h_prev: np.ndarray
    h: np.ndarray
    acts: dict = field(default_factory=dict)


@dataclass
class TrainingTape:
    kind: str
    n_x: int
    n_h: int
    tag: str = ""
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def masks(self, stream):
        return [getattr(r, f"mask_{stream}") for r in self.records]


def _check_input(params, x_t):
    x_t = as_vector(x_t, dtype=params.Wx.dtype)
    if x_t.shape[0] != params.n_x:
        raise DimensionError(f"input has length {x_t.shape[0]}, cell expects {params.n_x}")
    return x_t


def _encode_and_update(params, state, x_t, theta_x, theta_h, ledger, tag, t):
    dx, mask_x, x_hat = delta_encode(x_t, state.x_hat, theta_x)
    dh, mask_h, h_hat = delta_encode(state.h, state.h_hat, theta_h)
    if ledger is not None:
        ledger.note_mask(f"{tag}x", t, mask_x)
        ledger.note_mask(f"{tag}h", t, mask_h)
    mx = sparse_matvec(params.Wx, dx, ledger, f"{tag}x", t)
    mh = sparse_matvec(params.Wh, dh, ledger, f"{tag}h", t)
    return dx, mask_x, x_hat, dh, mask_h, h_hat, mx, mh


def delta_rnn_forward_step(params, state, x_t, theta_x, theta_h=None, ledger=None, tag="", t=0):
    theta_h = theta_x if theta_h is None else theta_h
    x_t = _check_input(params, x_t)
    dx, mask_x, x_hat, dh, mask_h, h_hat, mx, mh = _encode_and_update(
        params, state, x_t, theta_x, theta_h, ledger, tag, t
    )
    M = state.M + mx + mh
    h = np.tanh(M)
    rec = StepRecord(t, mask_x, dx, mask_h, dh, M, state.h, h)
    return DeltaCellState(x_hat, h_hat, h, M), h, rec


def delta_lstm_forward_step(params, state, x_t, theta_x, theta_h=None, ledger=None, tag="", t=0):
    theta_h = theta_x if theta_h is None else theta_h
    x_t = _check_input(params, x_t)
    dx, mask_x, x_hat, dh, mask_h, h_hat, mx, mh = _encode_and_update(
        params, state, x_t, theta_x, theta_h, ledger, tag, t
    )
    M = state.M + mx + mh
    n = params.n_h
    i = sigmoid(M[:n])
    f = sigmoid(M[n : 2 * n])
    g = np.tanh(M[2 * n : 3 * n])
    o = sigmoid(M[3 * n :])
    c = f * state.c + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    acts = {"i": i, "f": f, "g": g, "o": o, "c_prev": state.c, "c": c, "tanh_c": tanh_c}
    rec = StepRecord(t, mask_x, dx, mask_h, dh, M, state.h, h, acts)
    return DeltaCellState(x_hat, h_hat, h, M, c=c), h, rec


def delta_gru_forward_step(params, state, x_t, theta_x, theta_h=None, ledger=None, tag="", t=0):
    theta_h = theta_x if theta_h is None else theta_h
    x_t = _check_input(params, x_t)
    dx, mask_x, x_hat, dh, mask_h, h_hat, mx, mh = _encode_and_update(
        params, state, x_t, theta_x, theta_h, ledger, tag, t
    )
    n = params.n_h
    M = state.M + mx
    M[: 2 * n] += mh[: 2 * n]
    M_ch = state.M_ch + mh[2 * n :]
    r = sigmoid(M[:n])
    u = sigmoid(M[n : 2 * n])
    M_c = M[2 * n :] + r * M_ch
    cand = np.tanh(M_c)
    h = (1.0 - u) * state.h + u * cand
    acts = {"r": r, "u": u, "cand": cand, "M_c": M_c, "M_ch": M_ch}
    rec = StepRecord(t, mask_x, dx, mask_h, dh, M, state.h, h, acts)
    return DeltaCellState(x_hat, h_hat, h, M, M_ch=M_ch), h, rec


_STEP = {
    "rnn": delta_rnn_forward_step,
    "lstm": delta_lstm_forward_step,
    "gru": delta_gru_forward_step,
}


def delta_forward_step(params, state, x_t, theta_x, theta_h=None, ledger=None, tag="", t=0):
    return _STEP[params.kind](params, state, x_t, theta_x, theta_h, ledger, tag, t)


def delta_forward(params, xs, theta_x, theta_h=None, ledger=None, tag="", check_finite=True):
    """Run a delta cell over a ``(T, n_x)`` stream.

    Returns ``(hs, tape)`` with ``hs`` of shape ``(T, n_h)``.
    """
    xs = np.asarray(xs, dtype=params.Wx.dtype)
    if xs.ndim != 2 or xs.shape[1] != params.n_x:
        raise DimensionError(f"input stream must be (T, {params.n_x}), got {xs.shape}")
    step = _STEP[params.kind]
    state = DeltaCellState.initial(params)
    tape = TrainingTape(params.kind, params.n_x, params.n_h, tag)
    hs = np.empty((len(xs), params.n_h), dtype=params.Wx.dtype)
    for t, x_t in enumerate(xs):
        state, h, rec = step(params, state, x_t, theta_x, theta_h, ledger, tag, t)
        hs[t] = h
        tape.records.append(rec)
    if check_finite and not np.all(np.isfinite(hs)):
        raise NumericError("non-finite hidden state in delta forward")
    return hs, tape


def dense_reference_forward(kind, params, xs):
    """Textbook RNN/LSTM/GRU without deltas; the theta=0 oracle."""
    if kind != params.kind:
        raise ValueError(f"params are for {params.kind!r}, not {kind!r}")
    xs = np.asarray(xs, dtype=params.Wx.dtype)
    if xs.ndim != 2 or xs.shape[1] != params.n_x:
        raise DimensionError(f"input stream must be (T, {params.n_x}), got {xs.shape}")
    n = params.n_h
    h = np.zeros(n, dtype=params.Wx.dtype)
    c = np.zeros(n, dtype=params.Wx.dtype)
    hs = np.empty((len(xs), n), dtype=params.Wx.dtype)
    for t, x in enumerate(xs):
        zx = matvec(params.Wx, x) + params.b
        zh = matvec(params.Wh, h)
        if kind == "rnn":
            h = np.tanh(zx + zh)
        elif kind == "lstm":
            z = zx + zh
            i = activation("sigmoid", z[:n])
            f = activation("sigmoid", z[n : 2 * n])
            g = np.tanh(z[2 * n : 3 * n])
            o = activation("sigmoid", z[3 * n :])
            c = f * c + i * g
            h = o * np.tanh(c)
        else:
            r = activation("sigmoid", zx[:n] + zh[:n])
            u = activation("sigmoid", zx[n : 2 * n] + zh[n : 2 * n])
            cand = np.tanh(zx[2 * n :] + r * zh[2 * n :])
            h = (1.0 - u) * h + u * cand
        hs[t] = h
    return hs
