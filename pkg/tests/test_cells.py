import numpy as np
import pytest

from conftest import make_cell, make_stream
from deltabptt.cells import (
    CellParams,
    DeltaCellState,
    delta_forward,
    delta_gru_forward_step,
    dense_reference_forward,
)
from deltabptt.codec import decode
from deltabptt.costs import OpLedger
from deltabptt.tensor import DimensionError, NumericError


@pytest.mark.parametrize("seed", range(4))
def test_theta_zero_matches_textbook_cell(kind, seed):
    p = make_cell(kind, 6, 9, seed)
    xs = make_stream(12, 6, seed)
    hs, _ = delta_forward(p, xs, 0.0)
    np.testing.assert_allclose(hs, dense_reference_forward(kind, p, xs), atol=1e-12, rtol=0)


def test_zero_input_zero_bias_stays_silent(kind):
    p = make_cell(kind, 3, 4)
    p.b[:] = 0.0
    led = OpLedger()
    hs, tape = delta_forward(p, np.zeros((5, 3)), 0.05, ledger=led)
    assert np.all(hs == 0.0)
    assert all(r.mask_x.count == 0 and r.mask_h.count == 0 for r in tape.records)
    assert led.macs_fp == 0


def test_hidden_mask_empty_at_first_step(kind):
    p = make_cell(kind, 3, 5)
    _, tape = delta_forward(p, make_stream(4, 3), 0.0)
    assert tape.records[0].mask_h.count == 0


def test_telescoping_memory(kind):
    p = make_cell(kind, 5, 4, seed=3)
    xs = make_stream(6, 5, seed=3)
    _, tape = delta_forward(p, xs, 0.05)
    n = p.n_h
    acc = p.b.copy()
    acc_ch = np.zeros(n)
    for rec in tape.records:
        zx = p.Wx @ decode(rec.dx)
        zh = p.Wh @ decode(rec.dh)
        acc = acc + zx
        if kind == "gru":
            acc[: 2 * n] += zh[: 2 * n]
            acc_ch += zh[2 * n :]
            np.testing.assert_allclose(rec.acts["M_ch"], acc_ch, atol=1e-12, rtol=0)
        else:
            acc = acc + zh
        np.testing.assert_allclose(rec.M, acc, atol=1e-12, rtol=0)


def test_telescoping_small_rnn_worked_case():
    p = make_cell("rnn", 4, 4, seed=11)
    xs = make_stream(3, 4, seed=11)
    _, tape = delta_forward(p, xs, 0.05)
    dense = p.b + sum(p.Wx @ decode(r.dx) + p.Wh @ decode(r.dh) for r in tape.records)
    np.testing.assert_allclose(tape.records[-1].M, dense, atol=1e-12, rtol=0)


def test_lstm_saturated_forget_gate():
    p = make_cell("lstm", 4, 6, seed=2)
    p.Wx *= 0.1
    p.Wh *= 0.1
    p.b[p.gate("f")] = 10.0
    hs, tape = delta_forward(p, make_stream(8, 4, seed=2), 0.0)
    for rec in tape.records:
        a = rec.acts
        np.testing.assert_allclose(a["c"], a["c_prev"] + a["i"] * a["g"], atol=1e-3, rtol=0)
    np.testing.assert_allclose(hs, dense_reference_forward("lstm", p, make_stream(8, 4, seed=2)),
                               atol=1e-12, rtol=0)


def test_gru_update_gate_forced_open():
    p = make_cell("gru", 3, 5, seed=4)
    p.b[p.gate("u")] = 40.0  # sigmoid(40) rounds to exactly 1
    _, tape = delta_forward(p, make_stream(6, 3, seed=4), 0.1)
    for rec in tape.records:
        assert np.all(rec.acts["u"] == 1.0)
        np.testing.assert_array_equal(rec.h, rec.acts["cand"])


def _per_step_macs(led, t):
    return sum(c.macs for c in led.calls if c.t == t and c.kernel == "fp_matvec")


@pytest.mark.parametrize("kind,expected", [("lstm", 73_728), ("gru", 55_296), ("rnn", 18_432)])
def test_dense_per_step_mac_count(kind, expected):
    p = make_cell(kind, 16, 128)
    led = OpLedger()
    delta_forward(p, np.random.default_rng(0).normal(size=(3, 16)), 0.0, ledger=led)
    # from t=1 on every input and hidden coordinate changes
    assert _per_step_macs(led, 1) == expected
    assert _per_step_macs(led, 2) == expected


def test_masks_are_shared_objects(kind):
    p = make_cell(kind, 4, 5)
    led = OpLedger()
    _, tape = delta_forward(p, make_stream(5, 4), 0.1, ledger=led)
    for rec in tape.records:
        np.testing.assert_array_equal(rec.dx.nzil, rec.mask_x.indices())
        assert rec.dh.nzil is rec.mask_h.indices()


def test_step_preserves_gru_state_layout():
    p = make_cell("gru", 2, 3)
    s0 = DeltaCellState.initial(p)
    assert np.all(s0.M_ch == 0) and np.array_equal(s0.M, p.b)
    s1, h, rec = delta_gru_forward_step(p, s0, np.ones(2), 0.0)
    assert s1.M_ch.shape == (3,) and h.shape == (3,)


def test_errors():
    p = make_cell("lstm", 3, 4)
    with pytest.raises(DimensionError):
        delta_forward(p, np.zeros((5, 2)), 0.1)
    with pytest.raises(ValueError):
        CellParams.init("transformer", 3, 4, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        CellParams("rnn", np.zeros((4, 3)), np.zeros((4, 3)), np.zeros(4))
    with pytest.raises(ValueError):
        dense_reference_forward("gru", p, np.zeros((2, 3)))
    big = p.copy()
    big.Wx[:] = np.nan
    with pytest.raises(NumericError):
        delta_forward(big, np.ones((2, 3)), 0.0)


def test_float32_path_runs():
    p = make_cell("gru", 3, 4).astype(np.float32)
    hs, _ = delta_forward(p, make_stream(5, 3), 0.05)
    assert hs.dtype == np.float32
