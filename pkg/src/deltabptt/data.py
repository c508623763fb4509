"""Seeded synthetic sequence-classification tasks.

Both tasks add an AR(1) noise process whose coefficient is the
``smoothness`` knob: the noise keeps variance ``noise**2`` but its
step-to-step changes shrink as smoothness approaches 1, which is what
controls the natural delta sparsity of the input stream.

``delayed-recall``
    A class-specific cue vector is shown for the first ``cue_len`` steps,
    then only noise; the label must be read out at the last step.
``temporal-pattern``
    Each class is a sinusoid with its own frequency (``c + 1`` cycles per
    sequence) and a random per-channel phase.
"""

from dataclasses import dataclass

import numpy as np

from .codec import delta_encode
from .tensor import ConfigError

TASKS = ("delayed-recall", "temporal-pattern")


@dataclass
class SyntheticTaskSpec:
    task: str = "delayed-recall"
    num_classes: int = 2
    seq_len: int = 20
    input_dim: int = 4
    noise: float = 0.3
    smoothness: float = 0.9
    n_train: int = 128
    n_eval: int = 64
    cue_len: int = 3

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.seq_len < 1 or self.input_dim < 1:
            raise ConfigError("seq_len and input_dim must be positive")
        if not (0.0 <= self.smoothness < 1.0):
            raise ConfigError("smoothness must lie in [0, 1)")
        if not (self.noise >= 0.0 and np.isfinite(self.noise)):
            raise ConfigError("noise must be finite and >= 0")
        if self.n_train < 1 or self.n_eval < 0:
            raise ConfigError("n_train must be >= 1 and n_eval >= 0")
        if self.task == "delayed-recall" and not 1 <= self.cue_len <= self.seq_len:
            raise ConfigError("cue_len must lie in [1, seq_len]")
        return self


@dataclass
class Dataset:
    xs: np.ndarray  # (N, T, input_dim)
    ys: np.ndarray  # (N,)

    def __len__(self):
        return len(self.ys)


def smooth_noise(rng, n, T, d, sigma, smoothness):
    """Stationary AR(1) noise, shape ``(n, T, d)``, marginal std ``sigma``."""
    out = np.empty((n, T, d))
    out[:, 0] = rng.normal(0.0, sigma, size=(n, d))
    innov = sigma * np.sqrt(1.0 - smoothness**2)
    for t in range(1, T):
        out[:, t] = smoothness * out[:, t - 1] + innov * rng.normal(size=(n, d))
    return out


def _signals(spec, rng, labels):
    n, T, d = len(labels), spec.seq_len, spec.input_dim
    if spec.task == "delayed-recall":
        # one fixed +-1 cue per class, drawn from the task seed
        cues = rng.choice([-1.0, 1.0], size=(spec.num_classes, d))
        sig = np.zeros((n, T, d))
        sig[:, : spec.cue_len] = cues[labels][:, None, :]
        return sig
    t = np.arange(T)[None, :, None]
    freq = (labels + 1)[:, None, None]
    phase = rng.uniform(0.0, 2 * np.pi, size=(n, 1, d))
    return np.sin(2 * np.pi * freq * t / T + phase)


def generate_dataset(spec, seed):
    """Deterministic ``(train, eval)`` split for ``spec`` and ``seed``."""
    spec.validate()
    rng = np.random.default_rng(seed)
    total = spec.n_train + spec.n_eval
    labels = np.arange(total) % spec.num_classes
    rng.shuffle(labels)
    sig = _signals(spec, rng, labels)
    noise = smooth_noise(rng, total, spec.seq_len, spec.input_dim, spec.noise, spec.smoothness)
    xs = sig + noise
    train = Dataset(xs[: spec.n_train], labels[: spec.n_train])
    ev = Dataset(xs[spec.n_train :], labels[spec.n_train :])
    return train, ev


def input_occupancy(xs, theta):
    """Mean occupancy of the input delta stream over a batch of sequences."""
    hits = total = 0
    for seq in xs:
        ret = np.zeros(seq.shape[1])
        for x in seq:
            d, _, ret = delta_encode(x, ret, theta)
            hits += d.nnz
            total += d.length
    return hits / total
