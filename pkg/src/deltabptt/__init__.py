"""Sparse delta-RNN training: delta encoding, sparse BPTT, op accounting and an accelerator model."""
# ruff: noqa: F401

from .accel import AccelConfig, KernelTrace, dense_bound_cycles, simulate_kernel, speedup, sweep
from .bptt import CellGrads, delta_backward, delta_gru_backward, delta_lstm_backward, delta_rnn_backward
from .cells import (
    GATES,
    CellParams,
    DeltaCellState,
    TrainingTape,
    delta_forward,
    delta_gru_forward_step,
    delta_lstm_forward_step,
    delta_rnn_forward_step,
    dense_reference_forward,
)
from .codec import DeltaVector, Mask, decode, delta_encode, occupancy
from .costs import OpLedger, predict_bp_cost, predict_fp_cost, reconcile, weight_grad_memory_cost
from .kernels import sparse_input_grad, sparse_matvec, sparse_weight_grad_accum
from .oracle import dense_masked_autodiff, dense_reference_grads, masked_finite_difference
from .tensor import ConfigError, DimensionError, NumericError
from .train import TrainConfig, Trainer, train

__version__ = "0.1.0"
