"""Delta threshold encoding and the NZIL/NZVL compressed vector format."""

from dataclasses import dataclass, field

import numpy as np

from .tensor import DimensionError, as_vector, float_dtype


@dataclass(frozen=True, eq=False)
class Mask:
    """Packed bit mask, one bit per neuron (bit set = activated)."""

    length: int
    bits: np.ndarray
    _idx: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_bool(cls, flags):
        flags = np.asarray(flags, dtype=bool)
        return cls(len(flags), np.packbits(flags), np.flatnonzero(flags))

    def to_bool(self):
        return np.unpackbits(self.bits, count=self.length).astype(bool)

    def indices(self):
        if self._idx is None:
            object.__setattr__(self, "_idx", np.flatnonzero(self.to_bool()))
        return self._idx

    @property
    def count(self):
        return len(self.indices())

    def __len__(self):
        return self.length

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return self.length == other.length and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.length, self.bits.tobytes()))


@dataclass(frozen=True, eq=False)
class DeltaVector:
    """Sparse vector stored as a non-zero index list (NZIL) and value list (NZVL)."""

    length: int
    nzil: np.ndarray
    nzvl: np.ndarray

    def __post_init__(self):
        if len(self.nzil) != len(self.nzvl):
            raise DimensionError("NZIL and NZVL lengths differ")
        if len(self.nzil):
            if np.any(np.diff(self.nzil) <= 0):
                raise ValueError("NZIL must be strictly ascending")
            if self.nzil[0] < 0 or self.nzil[-1] >= self.length:
                raise ValueError("NZIL index out of range")

    @classmethod
    def empty(cls, length, dtype=np.float64):
        return cls(length, np.zeros(0, dtype=np.intp), np.zeros(0, dtype=dtype))

    @classmethod
    def from_dense(cls, v):
        v = np.asarray(v)
        idx = np.flatnonzero(v)
        return cls(len(v), idx, v[idx].copy())

    @property
    def nnz(self):
        return len(self.nzil)

    def __len__(self):
        return self.length

    def decode(self):
        return decode(self)


def delta_encode(current, retained, theta):
    """Threshold ``current`` against the retained state.

    A coordinate fires when ``|current - retained| > theta`` (strict). Fired
    coordinates carry their change in the returned :class:`DeltaVector` and
    overwrite the retained value; the rest keep the old retained value.

    Returns ``(delta, mask, new_retained)``.
    """
    current = as_vector(current, dtype=float_dtype(current))
    retained = as_vector(retained, dtype=float_dtype(retained))
    if current.shape != retained.shape:
        raise DimensionError(f"delta_encode: lengths {len(current)} and {len(retained)} differ")
    if not (theta >= 0):
        raise ValueError("theta must be >= 0")
    diff = current - retained
    fired = np.abs(diff) > theta
    idx = np.flatnonzero(fired)
    mask = Mask(len(current), np.packbits(fired), idx)
    delta = DeltaVector(len(current), idx, diff[idx])
    new_retained = retained.copy()
    new_retained[idx] = current[idx]
    return delta, mask, new_retained


def decode(d):
    out = np.zeros(d.length, dtype=d.nzvl.dtype if len(d.nzvl) else np.float64)
    out[d.nzil] = d.nzvl
    return out


def occupancy(x):
    """Fraction of activated entries of a mask or delta vector."""
    n = len(x)
    if n == 0:
        raise ValueError("occupancy of an empty vector is undefined")
    nnz = x.count if isinstance(x, Mask) else x.nnz
    return nnz / n
