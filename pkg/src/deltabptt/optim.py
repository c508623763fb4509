"""SGD and Adam over dicts of numpy arrays, updated in place."""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


def adam_step(params, grads, state, hyper):
    """One Adam update with bias correction and decoupled weight decay.

    Weight decay shrinks the weights directly (``p -= lr * wd * p``) and
    never enters the moment estimates.
    """
    state.step += 1
    b1, b2 = hyper.beta1, hyper.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads[name]
        if p.shape != g.shape:
            raise ValueError(f"{name}: param {p.shape} vs grad {g.shape}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if hyper.weight_decay:
            p -= hyper.lr * hyper.weight_decay * p
        p -= hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
    return params, state


def sgd_step(params, grads, lr, decay=0.0):
    """``p <- p - lr * (g + decay * p)``."""
    for name, p in params.items():
        p -= lr * (grads[name] + decay * p)
    return params


def cosine_lr(base_lr, epoch, total_epochs, min_lr=0.0):
    """Cosine annealing from ``base_lr`` at epoch 0 towards ``min_lr``."""
    if total_epochs <= 0:
        return base_lr
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * epoch / total_epochs))


def clip_global_norm(grads, max_norm):
    """Scale all gradients in place so their joint L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm > 0:
        s = max_norm / total
        for g in grads.values():
            g *= s
    return total
