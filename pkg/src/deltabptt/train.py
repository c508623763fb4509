"""Training harness: stacked delta cells plus a dense classifier head.

Gradients of the recurrent layers come from the sparse backward pass, or
from the dense masked-autodiff oracle when ``grad_mode == "oracle"``; the
two produce the same parameter trajectory. The classifier head sits outside
the delta framework and its MACs are not counted.
"""

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .bptt import delta_backward
from .cells import GATES, CellParams, delta_forward
from .costs import OpLedger
from .data import SyntheticTaskSpec, generate_dataset
from .optim import AdamHyper, AdamState, adam_step, clip_global_norm, cosine_lr, sgd_step
from .oracle import dense_masked_autodiff
from .tensor import ConfigError, NumericError, seeded_rng, uniform_init

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    cell: str = "lstm"
    layer_sizes: list = field(default_factory=lambda: [32])
    theta_x: float = 0.05
    theta_h: float = None
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2
    seed: int = 0
    dataset: SyntheticTaskSpec = field(default_factory=SyntheticTaskSpec)
    precision: str = "float64"
    scheduler: str = "none"
    loss_mode: str = "final"
    grad_mode: str = "sparse"
    max_grad_norm: float = None

    @property
    def theta_hidden(self):
        return self.theta_x if self.theta_h is None else self.theta_h

    @property
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64

    def validate(self):
        if self.cell not in GATES:
            raise ConfigError(f"cell must be one of {sorted(GATES)}")
        if not self.layer_sizes or any(int(n) < 1 for n in self.layer_sizes):
            raise ConfigError("layer_sizes must be a non-empty list of positive ints")
        for name in ("theta_x", "lr", "beta1", "beta2", "eps", "weight_decay"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and >= 0")
        if self.theta_h is not None and not (math.isfinite(self.theta_h) and self.theta_h >= 0):
            raise ConfigError("theta_h must be finite and >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        choices = {
            "optimizer": ("adam", "sgd"),
            "precision": ("float64", "float32"),
            "scheduler": ("none", "cosine"),
            "loss_mode": ("final", "sum"),
            "grad_mode": ("sparse", "oracle"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}")
        if self.max_grad_norm is not None and not self.max_grad_norm > 0:
            raise ConfigError("max_grad_norm must be positive")
        self.dataset.validate()
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "dataset" in d and isinstance(d["dataset"], dict):
            ds_known = {f.name for f in fields(SyntheticTaskSpec)}
            bad = set(d["dataset"]) - ds_known
            if bad:
                raise ConfigError(f"unknown dataset fields: {sorted(bad)}")
            d["dataset"] = SyntheticTaskSpec(**d["dataset"])
        cfg = cls(**d)
        cfg.layer_sizes = [int(n) for n in cfg.layer_sizes]
        return cfg


def softmax_xent(logits, label):
    z = logits - logits.max()
    p = np.exp(z)
    p /= p.sum()
    loss = -math.log(max(float(p[label]), 1e-300))
    dlogits = p.copy()
    dlogits[label] -= 1.0
    return loss, dlogits, int(np.argmax(logits))


@dataclass
class DeltaClassifier:
    layers: list
    W_out: np.ndarray
    b_out: np.ndarray

    @classmethod
    def init(cls, kind, n_in, layer_sizes, num_classes, rng, dtype=np.float64):
        layers = []
        n = n_in
        for size in layer_sizes:
            layers.append(CellParams.init(kind, n, size, rng, dtype))
            n = size
        W_out = uniform_init(rng, num_classes, n, dtype=dtype)
        b_out = np.zeros(num_classes, dtype=dtype)
        return cls(layers, W_out, b_out)

    def parameters(self):
        """Flat name -> array view of every trainable tensor."""
        out = {}
        for i, p in enumerate(self.layers):
            for k, v in p.arrays().items():
                out[f"L{i}.{k}"] = v
        out["out.W"] = self.W_out
        out["out.b"] = self.b_out
        return out

    def forward(self, xs, theta_x, theta_h, ledger=None):
        tapes, inputs = [], [xs]
        h = xs
        for i, p in enumerate(self.layers):
            h, tape = delta_forward(p, h, theta_x, theta_h, ledger, tag=f"L{i}.")
            tapes.append(tape)
            inputs.append(h)
        return inputs, tapes

    def predict(self, xs, theta_x, theta_h):
        inputs, _ = self.forward(xs, theta_x, theta_h)
        return int(np.argmax(self.W_out @ inputs[-1][-1] + self.b_out))

    def loss_and_grads(self, xs, label, theta_x, theta_h, loss_mode="final", grad_mode="sparse",
                       ledger=None):
        inputs, tapes = self.forward(xs, theta_x, theta_h, ledger)
        hs = inputs[-1]
        T = len(hs)
        dW_out = np.zeros_like(self.W_out)
        db_out = np.zeros_like(self.b_out)
        dh = np.zeros_like(hs)
        steps = range(T) if loss_mode == "sum" else [T - 1]
        loss = 0.0
        pred = None
        for t in steps:
            l, dlogits, pred = softmax_xent(self.W_out @ hs[t] + self.b_out, label)
            loss += l
            dW_out += np.outer(dlogits, hs[t])
            db_out += dlogits
            dh[t] = self.W_out.T @ dlogits
        grads = {"out.W": dW_out, "out.b": db_out}
        upstream = dh
        for i in range(len(self.layers) - 1, -1, -1):
            p = self.layers[i]
            need_dx = i > 0
            if grad_mode == "oracle":
                g = dense_masked_autodiff(p.kind, p, inputs[i], theta_x, upstream, theta_h,
                                          input_grads=need_dx)
            else:
                # the x-stream transposed kernel always runs so BP == 2x FP in the ledger
                g = delta_backward(p, tapes[i], upstream, ledger, input_grads=True)
            grads[f"L{i}.Wx"] = g.dWx
            grads[f"L{i}.Wh"] = g.dWh
            grads[f"L{i}.b"] = g.db
            upstream = g.dx
        return loss, pred, grads


def _mean_occ(ledger, suffix):
    return ledger.mean_occupancy(suffix)


class Trainer:
    """Owns model, optimizer state, data and the run's op counters."""

    def __init__(self, config):
        self.config = config.validate()
        cfg = config
        self.rng = seeded_rng(cfg.seed)
        self.train_set, self.eval_set = generate_dataset(cfg.dataset, cfg.seed)
        dt = cfg.dtype
        self.train_set.xs = self.train_set.xs.astype(dt)
        self.eval_set.xs = self.eval_set.xs.astype(dt)
        self.model = DeltaClassifier.init(
            cfg.cell, cfg.dataset.input_dim, cfg.layer_sizes, cfg.dataset.num_classes, self.rng, dt
        )
        self.opt_state = AdamState()
        self.epoch = 0
        self.step_count = 0
        self.cum_fp_macs = 0
        self.cum_bp_macs = 0
        self.cum_weight_words = 0
        self.metrics = []

    def current_lr(self):
        cfg = self.config
        if cfg.scheduler == "cosine":
            return cosine_lr(cfg.lr, self.epoch, cfg.epochs)
        return cfg.lr

    def train_step(self, idx):
        """Forward/backward over the batch ``idx`` and one optimizer update."""
        cfg = self.config
        batch_ledgers = []
        total = None
        loss_sum = 0.0
        correct = 0
        for j in idx:
            led = OpLedger()
            loss, pred, grads = self.model.loss_and_grads(
                self.train_set.xs[j], int(self.train_set.ys[j]), cfg.theta_x, cfg.theta_hidden,
                cfg.loss_mode, cfg.grad_mode, led,
            )
            if not math.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {self.epoch}, step {self.step_count}, sample {j}"
                )
            loss_sum += loss
            correct += int(pred == self.train_set.ys[j])
            batch_ledgers.append(led)
            if total is None:
                total = grads
            else:
                for k in total:
                    total[k] += grads[k]
        scale = 1.0 / len(idx)
        for g in total.values():
            g *= scale
        if cfg.max_grad_norm is not None:
            clip_global_norm(total, cfg.max_grad_norm)
        params = self.model.parameters()
        lr = self.current_lr()
        if cfg.optimizer == "adam":
            hyper = AdamHyper(lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)
            adam_step(params, total, self.opt_state, hyper)
        else:
            sgd_step(params, total, lr, cfg.weight_decay)
        for name, p in params.items():
            if not np.all(np.isfinite(p)):
                raise NumericError(f"non-finite parameter {name} after step {self.step_count}")
        self.step_count += 1
        ledger = OpLedger.merge_batch(batch_ledgers)
        return loss_sum, correct, ledger

    def batches(self):
        order = self.rng.permutation(len(self.train_set))
        B = self.config.batch_size
        return [order[i : i + B] for i in range(0, len(order), B)]

    def evaluate(self, dataset=None):
        ds = self.eval_set if dataset is None else dataset
        if len(ds) == 0:
            return float("nan")
        cfg = self.config
        hits = sum(
            int(self.model.predict(x, cfg.theta_x, cfg.theta_hidden) == y) for x, y in zip(ds.xs, ds.ys)
        )
        return hits / len(ds)

    def run_epoch(self):
        loss_sum = 0.0
        correct = 0
        fp = bp = words = 0
        occ_x, occ_h = [], []
        for idx in self.batches():
            l, c, led = self.train_step(idx)
            loss_sum += l
            correct += c
            fp += led.macs_fp
            bp += led.macs_bp
            words += led.weight_words
            occ_x.append(_mean_occ(led, ".x"))
            occ_h.append(_mean_occ(led, ".h"))
        n = len(self.train_set)
        self.cum_fp_macs += fp
        self.cum_bp_macs += bp
        self.cum_weight_words += words
        self.epoch += 1
        row = {
            "epoch": self.epoch,
            "train_loss": loss_sum / n,
            "train_acc": correct / n,
            "eval_metric": self.evaluate(),
            "mean_occupancy_x": float(np.mean(occ_x)),
            "mean_occupancy_h": float(np.mean(occ_h)),
            "epoch_fp_macs": fp,
            "epoch_bp_macs": bp,
            "cum_fp_macs": self.cum_fp_macs,
            "cum_bp_macs": self.cum_bp_macs,
            "cum_weight_words": self.cum_weight_words,
            "lr": self.current_lr(),
        }
        self.metrics.append(row)
        return row

    def fit(self, callback=None):
        while self.epoch < self.config.epochs:
            row = self.run_epoch()
            if callback is not None:
                callback(row)
        return self.metrics

    def summary(self):
        last = self.metrics[-1] if self.metrics else {}
        return {
            "config": self.config.to_dict(),
            "epochs_run": self.epoch,
            "steps": self.step_count,
            "final_train_acc": last.get("train_acc"),
            "final_eval_acc": last.get("eval_metric"),
            "best_eval_acc": max((m["eval_metric"] for m in self.metrics), default=None),
            "cum_fp_macs": self.cum_fp_macs,
            "cum_bp_macs": self.cum_bp_macs,
            "cum_weight_words": self.cum_weight_words,
        }

    # checkpointing -----------------------------------------------------

    def state_dict(self):
        return {
            "format_version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "epoch": self.epoch,
            "step_count": self.step_count,
            "params": {k: v.tolist() for k, v in self.model.parameters().items()},
            "optimizer": {
                "step": self.opt_state.step,
                "m": {k: v.tolist() for k, v in self.opt_state.m.items()},
                "v": {k: v.tolist() for k, v in self.opt_state.v.items()},
            },
            "rng_state": self.rng.bit_generator.state,
            "counters": {
                "cum_fp_macs": self.cum_fp_macs,
                "cum_bp_macs": self.cum_bp_macs,
                "cum_weight_words": self.cum_weight_words,
            },
            "metrics": self.metrics,
        }

    def save_checkpoint(self, path):
        with open(path, "w") as fh:
            json.dump(self.state_dict(), fh)

    @classmethod
    def from_state_dict(cls, state):
        if state.get("format_version") != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {state.get('format_version')}")
        trainer = cls(TrainConfig.from_dict(state["config"]))
        dt = trainer.config.dtype
        params = trainer.model.parameters()
        for k, v in state["params"].items():
            params[k][...] = np.asarray(v, dtype=dt)
        opt = state["optimizer"]
        trainer.opt_state = AdamState(
            step=opt["step"],
            m={k: np.asarray(v, dtype=dt) for k, v in opt["m"].items()},
            v={k: np.asarray(v, dtype=dt) for k, v in opt["v"].items()},
        )
        trainer.rng.bit_generator.state = state["rng_state"]
        trainer.epoch = state["epoch"]
        trainer.step_count = state["step_count"]
        c = state["counters"]
        trainer.cum_fp_macs = c["cum_fp_macs"]
        trainer.cum_bp_macs = c["cum_bp_macs"]
        trainer.cum_weight_words = c["cum_weight_words"]
        trainer.metrics = list(state.get("metrics", []))
        return trainer

    @classmethod
    def load_checkpoint(cls, path):
        with open(path) as fh:
            return cls.from_state_dict(json.load(fh))


def train(config, callback=None):
    """Run a full training job; returns the finished :class:`Trainer`."""
    trainer = Trainer(config)
    trainer.fit(callback)
    return trainer
