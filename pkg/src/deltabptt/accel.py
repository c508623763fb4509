"""Cycle-approximate model of an NZIL-driven delta-RNN training accelerator.

A P-wide PE array retires P MACs per cycle. For each delta vector the
array walks its NZIL, fetching one weight column per index from DRAM, so
work and traffic both scale with the number of non-zeros.

Timing model (a latency model, not RTL):

* ``fp_matvec`` and ``bp_input_grad`` run timestep by timestep because of
  the recurrence. Each timestep pays ``overhead_cycles`` plus, when any
  column is fetched, one ``dram_latency`` to open the first column; the
  remaining fetches stream in bursts overlapped with compute.
* ``bp_weight_grad`` runs once at the end of BPTT over all timesteps, so
  overhead and latency are paid once.

``burst_rate`` is in PE-array words per cycle, one array word being P
weights; at the default of 1 the DRAM stream keeps the array exactly busy.
"""

import math
from dataclasses import dataclass, field

import numpy as np

KERNELS = ("fp_matvec", "bp_input_grad", "bp_weight_grad")
PER_TIMESTEP = ("fp_matvec", "bp_input_grad")
SWEEP_FIELDS = ("kernel", "size", "sparsity", "cycles", "speedup")


@dataclass(frozen=True)
class AccelConfig:
    num_pes: int = 16
    overhead_cycles: int = 8
    dram_latency: int = 10
    burst_rate: float = 1.0

    def __post_init__(self):
        if self.num_pes < 1:
            raise ValueError("num_pes must be >= 1")
        if self.overhead_cycles < 0 or self.dram_latency < 0:
            raise ValueError("overheads must be >= 0")
        if not self.burst_rate > 0:
            raise ValueError("burst_rate must be positive")


@dataclass
class KernelTrace:
    kernel: str
    cycles: int
    macs: int
    weight_words_fetched: int
    step_cycles: list = field(default_factory=list)


def _fetch_cycles(words, config):
    return math.ceil(words / (config.num_pes * config.burst_rate))


def simulate_kernel(kind, n_rows, nzil_lengths, config=None):
    """Cycle count of one training kernel over a sequence of delta vectors.

    ``nzil_lengths[t]`` is the number of active columns at timestep t; each
    active column costs ``n_rows`` MACs and ``n_rows`` weight words.
    """
    config = config or AccelConfig()
    if kind not in KERNELS:
        raise ValueError(f"unknown kernel {kind!r}")
    P = config.num_pes
    lengths = [int(k) for k in nzil_lengths]
    macs = sum(lengths) * n_rows

    if kind in PER_TIMESTEP:
        steps = []
        for k in lengths:
            words = k * n_rows
            compute = math.ceil(words / P)
            stall = 0
            if k:
                stall = config.dram_latency + max(0, _fetch_cycles(words, config) - compute)
            steps.append(config.overhead_cycles + compute + stall)
        return KernelTrace(kind, sum(steps), macs, macs, steps)

    compute = math.ceil(macs / P)
    stall = 0
    if macs:
        stall = config.dram_latency + max(0, _fetch_cycles(macs, config) - compute)
    cycles = config.overhead_cycles + compute + stall
    return KernelTrace(kind, cycles, macs, macs, [cycles])


def dense_bound_cycles(n_rows, n_cols, T, num_pes):
    """Ideal dense MxV time: every MAC retired, no latency or overhead."""
    return n_rows * n_cols * T / num_pes


def speedup(trace, dense_bound):
    if trace.cycles == 0:
        raise ZeroDivisionError("empty kernel trace")
    return dense_bound / trace.cycles


def synthetic_nzil_lengths(size, T, sparsity, rng):
    """Per-timestep active-column counts for random delta vectors.

    The total number of non-zeros is ``round((1 - sparsity) * size * T)``,
    spread as evenly as possible with the remainder assigned to random
    timesteps, so the stream's occupancy matches the nominal value.
    """
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError("sparsity must lie in [0, 1]")
    total = int(round((1.0 - sparsity) * size * T))
    base, extra = divmod(total, T)
    lengths = np.full(T, base, dtype=int)
    lengths[rng.choice(T, size=extra, replace=False)] += 1
    return lengths.tolist()


def sweep(sizes=(64, 128, 256), sparsities=(0.5, 0.8, 0.9), config=None, seed=0):
    """Speedup grid over network sizes and sparsity levels.

    For each network size N the input size, hidden size and sequence
    length all equal N. Returns one row per (kernel, size, sparsity).
    """
    config = config or AccelConfig()
    rng = np.random.default_rng(seed)
    rows = []
    for size in sizes:
        for s in sparsities:
            lengths = synthetic_nzil_lengths(size, size, s, rng)
            dense = dense_bound_cycles(size, size, size, config.num_pes)
            for kernel in KERNELS:
                trace = simulate_kernel(kernel, size, lengths, config)
                rows.append(
                    {
                        "kernel": kernel,
                        "size": size,
                        "sparsity": s,
                        "cycles": trace.cycles,
                        "speedup": speedup(trace, dense),
                    }
                )
    return rows
