import json

import numpy as np
import pytest

from deltabptt.data import SyntheticTaskSpec
from deltabptt.tensor import ConfigError, NumericError
from deltabptt.train import DeltaClassifier, TrainConfig, Trainer, softmax_xent, train

SMALL = SyntheticTaskSpec(n_train=24, n_eval=8, seq_len=8, input_dim=3)


def small_config(**kw):
    base = dict(layer_sizes=[6], epochs=2, batch_size=8, lr=1e-2, dataset=SMALL)
    base.update(kw)
    return TrainConfig(**base)


def params_of(trainer):
    return {k: v.copy() for k, v in trainer.model.parameters().items()}


def max_rel_drift(a, b):
    return max(np.max(np.abs(a[k] - b[k])) / max(np.max(np.abs(b[k])), 1e-300) for k in a)


def test_softmax_xent_gradient():
    logits = np.array([0.2, -1.0, 0.5])
    loss, d, pred = softmax_xent(logits, 2)
    eps = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = eps
        fd = (softmax_xent(logits + e, 2)[0] - softmax_xent(logits - e, 2)[0]) / (2 * eps)
        assert abs(fd - d[i]) < 1e-8
    assert pred == 2


def test_classifier_gradients_match_fd():
    rng = np.random.default_rng(0)
    model = DeltaClassifier.init("lstm", 3, [4, 5], 2, rng)
    xs = rng.normal(size=(6, 3))
    _, _, grads = model.loss_and_grads(xs, 1, 0.0, 0.0, loss_mode="sum")
    params = model.parameters()
    for name in ("L0.Wx", "L1.Wh", "out.W"):
        arr = params[name]
        idx = (1, 2)
        orig = arr[idx]
        arr[idx] = orig + 1e-6
        lp = model.loss_and_grads(xs, 1, 0.0, 0.0, loss_mode="sum")[0]
        arr[idx] = orig - 1e-6
        lm = model.loss_and_grads(xs, 1, 0.0, 0.0, loss_mode="sum")[0]
        arr[idx] = orig
        assert abs((lp - lm) / 2e-6 - grads[name][idx]) < 1e-6


def test_run_is_deterministic():
    a = train(small_config())
    b = train(small_config())
    assert a.metrics == b.metrics
    pa, pb = params_of(a), params_of(b)
    assert all(np.array_equal(pa[k], pb[k]) for k in pa)


def test_checkpoint_roundtrip_next_step_bit_exact(tmp_path):
    t1 = Trainer(small_config(scheduler="cosine"))
    t1.run_epoch()
    path = tmp_path / "ckpt.json"
    t1.save_checkpoint(path)
    t2 = Trainer.load_checkpoint(path)
    assert json.loads(path.read_text())["format_version"] == 1
    b1, b2 = t1.batches(), t2.batches()
    assert all(np.array_equal(x, y) for x, y in zip(b1, b2))
    t1.train_step(b1[0])
    t2.train_step(b2[0])
    p1, p2 = params_of(t1), params_of(t2)
    assert all(np.array_equal(p1[k], p2[k]) for k in p1)
    for k in t1.opt_state.m:
        assert np.array_equal(t1.opt_state.m[k], t2.opt_state.m[k])


def test_resume_matches_uninterrupted_run(tmp_path):
    full = train(small_config(epochs=3))
    part = Trainer(small_config(epochs=3))
    part.run_epoch()
    part.save_checkpoint(tmp_path / "c.json")
    resumed = Trainer.load_checkpoint(tmp_path / "c.json")
    resumed.fit()
    assert resumed.metrics == full.metrics


@pytest.mark.parametrize("cell", ["rnn", "lstm", "gru"])
def test_sparse_and_oracle_trajectories_agree(cell):
    a = Trainer(small_config(cell=cell, theta_x=0.1, layer_sizes=[5, 4]))
    b = Trainer(small_config(cell=cell, theta_x=0.1, layer_sizes=[5, 4], grad_mode="oracle"))
    for _ in range(5):
        idx = a.rng.permutation(len(a.train_set))[:8]
        b.rng.permutation(len(b.train_set))
        a.train_step(idx)
        b.train_step(idx)
    assert max_rel_drift(params_of(a), params_of(b)) <= 1e-9


def test_weight_traffic_batch_one_vs_many():
    t = Trainer(small_config(theta_x=0.1))
    _, _, led1 = t.train_step(np.array([0]))
    assert led1.weight_words_read == led1.macs_fp + led1.macs_bp_input_grad
    _, _, led4 = t.train_step(np.arange(4))
    # dense: every (kernel, stream, step) reads its whole matrix once
    rows = 4 * 6
    dense = SMALL.seq_len * 2 * (rows * SMALL.input_dim + rows * 6)
    assert led4.weight_words_read == dense


def test_metrics_row_and_summary():
    tr = train(small_config())
    row = tr.metrics[-1]
    assert row["epoch"] == 2
    assert row["cum_bp_macs"] == 2 * row["cum_fp_macs"]
    assert 0.0 <= row["mean_occupancy_x"] <= 1.0
    s = tr.summary()
    assert s["epochs_run"] == 2 and s["steps"] == 6


def test_sgd_and_float32_and_clipping_run():
    tr = train(small_config(optimizer="sgd", precision="float32", max_grad_norm=1.0, epochs=1))
    assert tr.model.W_out.dtype == np.float32


@pytest.mark.parametrize(
    "bad",
    [
        {"cell": "tcn"},
        {"layer_sizes": []},
        {"lr": -1.0},
        {"theta_x": float("nan")},
        {"theta_h": -0.1},
        {"beta1": 1.0},
        {"batch_size": 0},
        {"optimizer": "rmsprop"},
        {"grad_mode": "fd"},
        {"max_grad_norm": 0.0},
    ],
)
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        small_config(**bad).validate()


def test_config_dict_roundtrip_and_unknown_keys():
    cfg = small_config(theta_h=0.2)
    back = TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"lr": 0.1, "momentum": 0.9})
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"dataset": {"task": "delayed-recall", "vocab": 3}})


def test_bad_checkpoint_version():
    state = Trainer(small_config()).state_dict()
    state["format_version"] = 99
    with pytest.raises(ConfigError):
        Trainer.from_state_dict(state)


def test_non_finite_parameters_raise():
    t = Trainer(small_config())
    t.model.layers[0].Wx[0, 0] = np.nan
    with pytest.raises(NumericError):
        t.train_step(np.array([0, 1]))
