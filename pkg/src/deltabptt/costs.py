"""MAC and weight-memory accounting, closed-form cost predictions, reconciliation.

Only matrix-vector and outer-product MACs are counted. Elementwise gate
arithmetic and the classifier head are outside the ledger.
"""

import csv
from dataclasses import dataclass, field
from fractions import Fraction

KERNELS = ("fp_matvec", "bp_input_grad", "bp_weight_grad")

OPS_CURVE_FIELDS = (
    "epoch",
    "cum_fp_macs",
    "cum_bp_macs",
    "mean_occupancy_x",
    "mean_occupancy_h",
    "eval_metric",
)


@dataclass(frozen=True)
class KernelCall:
    kernel: str
    stream: str
    t: int
    rows: int
    length: int
    nnz: int

    @property
    def macs(self):
        return self.nnz * self.rows

    @property
    def occupancy(self):
        return Fraction(self.nnz, self.length)


@dataclass
class OpLedger:
    """Exact operation counts for one run.

    Kernels charge ``nnz * rows`` MACs and the same number of weight words
    (batch-1 column skipping). :meth:`merge_batch` switches weight traffic to
    dense counts when more than one stream shares a weight fetch.
    """

    macs_fp: int = 0
    macs_bp_input_grad: int = 0
    macs_bp_weight_grad: int = 0
    weight_words_read: int = 0
    weight_grad_words_written: int = 0
    mask_bits_read: int = 0
    calls: list = field(default_factory=list)
    # forward masks as produced by the encoder: (stream, t) -> (nnz, length)
    masks: dict = field(default_factory=dict)

    def record(self, kernel, rows, length, nnz, stream="", t=-1):
        macs = nnz * rows
        if kernel == "fp_matvec":
            self.macs_fp += macs
            self.weight_words_read += macs
        elif kernel == "bp_input_grad":
            self.macs_bp_input_grad += macs
            self.weight_words_read += macs
            self.mask_bits_read += length
        elif kernel == "bp_weight_grad":
            self.macs_bp_weight_grad += macs
            self.weight_grad_words_written += macs
        else:
            raise ValueError(f"unknown kernel {kernel!r}")
        self.calls.append(KernelCall(kernel, stream, t, rows, length, nnz))

    def note_mask(self, stream, t, mask):
        self.masks[(stream, t)] = (mask.count, len(mask))

    @property
    def macs_bp(self):
        return self.macs_bp_input_grad + self.macs_bp_weight_grad

    @property
    def macs_total(self):
        return self.macs_fp + self.macs_bp

    @property
    def weight_words(self):
        return self.weight_words_read + self.weight_grad_words_written

    def occupancy_trace(self, kernel="fp_matvec", stream=None):
        """``[(stream, t, occupancy)]`` for one kernel, sorted by stream then time."""
        out = [
            (c.stream, c.t, c.occupancy)
            for c in self.calls
            if c.kernel == kernel and (stream is None or c.stream == stream)
        ]
        return sorted(out, key=lambda r: (r[0], r[1]))

    def mean_occupancy(self, stream_suffix):
        """Mean forward-mask occupancy over streams whose name ends with ``stream_suffix``."""
        vals = [nnz / n for (s, _), (nnz, n) in self.masks.items() if s.endswith(stream_suffix)]
        return sum(vals) / len(vals) if vals else 0.0

    def merge(self, other):
        """Add another ledger's counts (independent runs, e.g. successive batches)."""
        self.macs_fp += other.macs_fp
        self.macs_bp_input_grad += other.macs_bp_input_grad
        self.macs_bp_weight_grad += other.macs_bp_weight_grad
        self.weight_words_read += other.weight_words_read
        self.weight_grad_words_written += other.weight_grad_words_written
        self.mask_bits_read += other.mask_bits_read
        self.calls.extend(other.calls)
        self.masks.update(other.masks)
        return self

    @classmethod
    def merge_batch(cls, ledgers):
        """Combine the ledgers of the streams of one mini-batch.

        MACs add up. Weight traffic is charged once per (kernel, stream, t):
        sparse if the batch holds a single stream, dense (rows * cols) otherwise,
        since the union of active columns across a batch is not skippable.
        """
        ledgers = list(ledgers)
        out = cls()
        for led in ledgers:
            out.macs_fp += led.macs_fp
            out.macs_bp_input_grad += led.macs_bp_input_grad
            out.macs_bp_weight_grad += led.macs_bp_weight_grad
            out.mask_bits_read += led.mask_bits_read
            out.calls.extend(led.calls)
        if len(ledgers) == 1:
            out.weight_words_read = ledgers[0].weight_words_read
            out.weight_grad_words_written = ledgers[0].weight_grad_words_written
            out.masks.update(ledgers[0].masks)
            return out
        seen = {}
        for c in out.calls:
            seen[(c.kernel, c.stream, c.t)] = c.rows * c.length
        for (kernel, _, _), words in seen.items():
            if kernel == "bp_weight_grad":
                out.weight_grad_words_written += words
            else:
                out.weight_words_read += words
        # occupancy statistics stay per stream; keep the mean over the batch
        acc = {}
        for led in ledgers:
            for key, (nnz, n) in led.masks.items():
                a = acc.setdefault(key, [0, 0])
                a[0] += nnz
                a[1] += n
        out.masks = {k: (v[0], v[1]) for k, v in acc.items()}
        return out

    def summary(self):
        return {
            "macs_fp": self.macs_fp,
            "macs_bp_input_grad": self.macs_bp_input_grad,
            "macs_bp_weight_grad": self.macs_bp_weight_grad,
            "macs_bp": self.macs_bp,
            "weight_words_read": self.weight_words_read,
            "weight_grad_words_written": self.weight_grad_words_written,
            "mask_bits_read": self.mask_bits_read,
            "kernel_calls": len(self.calls),
        }


@dataclass(frozen=True)
class CostPrediction:
    dense_macs: int
    predicted_sparse_macs: float
    predicted_speedup: float
    memory_cost_sparse: float


def _split_occupancy(occupancy):
    if isinstance(occupancy, (tuple, list)):
        o_x, o_h = occupancy
    else:
        o_x = o_h = occupancy
    for o in (o_x, o_h):
        if not 0.0 <= o <= 1.0:
            raise ValueError(f"occupancy must lie in [0, 1], got {o}")
    return o_x, o_h


def _speedup(dense, sparse):
    return float("inf") if sparse == 0 else dense / sparse


def weight_grad_memory_cost(rows, cols, occupancy):
    """Words moved by one sparse outer-product step.

    ``occupancy * rows * cols`` weight words, plus the delta values and mask
    (``cols`` each) and the written gradient vector (``rows``). For a square
    ``n x n`` matrix this is ``o*n^2 + 3n``.
    """
    return occupancy * rows * cols + 2 * cols + rows


def predict_fp_cost(n_in, n_hidden, gates, occupancy):
    """Per-timestep forward MACs of a delta cell.

    ``occupancy`` is a single value or an ``(o_x, o_h)`` pair for the input
    and hidden delta streams.
    """
    o_x, o_h = _split_occupancy(occupancy)
    rows = gates * n_hidden
    dense = rows * (n_in + n_hidden)
    sparse = rows * (o_x * n_in + o_h * n_hidden)
    memory = o_x * rows * n_in + o_h * rows * n_hidden + n_in + n_hidden
    return CostPrediction(dense, sparse, _speedup(dense, sparse), memory)


def predict_bp_cost(n_in, n_hidden, gates, occupancy):
    """Per-timestep backward MACs: input-gradient MxV plus weight-gradient outer product."""
    o_x, o_h = _split_occupancy(occupancy)
    fp = predict_fp_cost(n_in, n_hidden, gates, (o_x, o_h))
    rows = gates * n_hidden
    memory = (
        # transposed MxV: same weight columns as forward, plus dM, mask, result
        o_x * rows * n_in + o_h * rows * n_hidden + 2 * rows + 2 * (n_in + n_hidden)
        + weight_grad_memory_cost(rows, n_in, o_x)
        + weight_grad_memory_cost(rows, n_hidden, o_h)
    )
    dense = 2 * fp.dense_macs
    sparse = 2 * fp.predicted_sparse_macs
    return CostPrediction(dense, sparse, _speedup(dense, sparse), memory)


@dataclass
class ReconcileReport:
    dense_fp: int
    predicted_fp: int
    measured_fp: int
    predicted_bp: int
    measured_bp: int
    measured_weight_words: int
    mismatches: list

    @property
    def ok(self):
        return not self.mismatches

    @property
    def fp_ratio(self):
        return self.measured_fp / self.dense_fp if self.dense_fp else 0.0

    def as_dict(self):
        return {
            "dense_fp": self.dense_fp,
            "predicted_fp": self.predicted_fp,
            "measured_fp": self.measured_fp,
            "predicted_bp": self.predicted_bp,
            "measured_bp": self.measured_bp,
            "measured_weight_words": self.measured_weight_words,
            "fp_ratio": self.fp_ratio,
            "ok": self.ok,
            "mismatches": self.mismatches,
        }


def reconcile(ledger, kernel_shapes):
    """Check measured MACs against the per-step occupancy prediction.

    ``kernel_shapes`` maps a stream name (as tagged in the ledger, e.g.
    ``"L0.x"``) to the ``(rows, cols)`` of the weight matrix that stream
    drives. The prediction uses the masks noted by the encoder, not the
    kernels' own counts, so a kernel that touches the wrong columns shows
    up as a mismatch. Everything is integer arithmetic.
    """
    dense_fp = 0
    predicted_fp = 0
    for (stream, _t), (nnz, length) in ledger.masks.items():
        if stream not in kernel_shapes:
            continue
        rows, cols = kernel_shapes[stream]
        if cols != length:
            raise ValueError(f"stream {stream}: mask length {length} != weight cols {cols}")
        dense_fp += rows * cols
        # occupancy * rows * cols == nnz * rows, exactly
        predicted_fp += Fraction(nnz, length) * rows * cols
    predicted_fp = int(predicted_fp)

    measured_bp_in = sum(c.macs for c in ledger.calls if c.kernel == "bp_input_grad")
    measured_bp_w = sum(c.macs for c in ledger.calls if c.kernel == "bp_weight_grad")
    mismatches = []
    if ledger.macs_fp != predicted_fp:
        mismatches.append(f"fp: measured {ledger.macs_fp} != predicted {predicted_fp}")
    if measured_bp_w and measured_bp_w != predicted_fp:
        mismatches.append(f"bp_weight_grad: measured {measured_bp_w} != predicted {predicted_fp}")
    if measured_bp_in and measured_bp_in != predicted_fp:
        mismatches.append(f"bp_input_grad: measured {measured_bp_in} != predicted {predicted_fp}")
    fp_occ = {(s, t): occ for s, t, occ in ledger.occupancy_trace("fp_matvec")}
    for kernel in ("bp_input_grad", "bp_weight_grad"):
        for s, t, occ in ledger.occupancy_trace(kernel):
            if fp_occ.get((s, t)) != occ:
                mismatches.append(f"{kernel} occupancy at {s}@{t} differs from forward")
                break
    return ReconcileReport(
        dense_fp=dense_fp,
        predicted_fp=predicted_fp,
        measured_fp=ledger.macs_fp,
        predicted_bp=2 * predicted_fp,
        measured_bp=ledger.macs_bp,
        measured_weight_words=ledger.weight_words,
        mismatches=mismatches,
    )


def training_ops_curve(metrics):
    """Cumulative-ops-vs-accuracy rows from per-epoch training metrics."""
    return [{k: m[k] for k in OPS_CURVE_FIELDS} for m in metrics]


def write_csv(rows, path, fields=None):
    rows = list(rows)
    fields = list(fields or (rows[0].keys() if rows else OPS_CURVE_FIELDS))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)
