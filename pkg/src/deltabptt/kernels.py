"""The three column-skipping kernels of delta-network training.

All of them walk the NZIL of a delta vector (or the index list of a mask)
and touch only those weight columns. Each call charges its exact MAC count
to an optional :class:`~deltabptt.costs.OpLedger`.
"""

import numpy as np

from .codec import DeltaVector
from .tensor import DimensionError, column_accumulate


def sparse_matvec(W, delta, ledger=None, stream="", t=-1):
    """Forward product ``W @ decode(delta)`` over the NZIL columns only."""
    if W.shape[1] != delta.length:
        raise DimensionError(f"sparse_matvec: W is {W.shape}, delta has length {delta.length}")
    if ledger is not None:
        ledger.record("fp_matvec", W.shape[0], delta.length, delta.nnz, stream, t)
    return column_accumulate(W, delta.nzil, delta.nzvl)


def sparse_input_grad(W, dM, mask, ledger=None, stream="", t=-1):
    """``(W.T @ dM)`` evaluated only at the mask's set columns.

    The result shares the mask's index list; masked-off coordinates are never
    computed.
    """
    if W.shape[0] != len(dM):
        raise DimensionError(f"sparse_input_grad: W is {W.shape}, dM has length {len(dM)}")
    if W.shape[1] != len(mask):
        raise DimensionError(f"sparse_input_grad: W is {W.shape}, mask has length {len(mask)}")
    idx = mask.indices()
    if ledger is not None:
        ledger.record("bp_input_grad", W.shape[0], len(mask), len(idx), stream, t)
    if len(idx) == 0:
        return DeltaVector(len(mask), idx, np.zeros(0, dtype=dM.dtype))
    vals = W.T[idx] @ dM
    return DeltaVector(len(mask), idx, vals)


def sparse_weight_grad_accum(grads, dM, delta, ledger=None, stream="", t=-1):
    """In place: ``grads[:, j] += dM * v`` for each ``(j, v)`` of the delta vector."""
    if grads.shape[0] != len(dM) or grads.shape[1] != delta.length:
        raise DimensionError(
            f"sparse_weight_grad_accum: grads {grads.shape}, dM {len(dM)}, delta {delta.length}"
        )
    if ledger is not None:
        ledger.record("bp_weight_grad", grads.shape[0], delta.length, delta.nnz, stream, t)
    if delta.nnz:
        grads[:, delta.nzil] += np.outer(dM, delta.nzvl)
    return grads
