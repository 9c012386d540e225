"""Arithmetic over the three rings used by the 3PC protocols.

Elements of Z_{2^64} and Z_{2^64-1} live in ``uint64`` arrays; elements of
Z_67 live in ``uint8`` arrays.  Every function here expects canonical input
(see :meth:`Ring.is_canonical`) and returns canonical output.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ELL = 64
P = 67
MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


class RingError(ValueError):
    pass


class Ring(enum.Enum):
    ZL = "ZL"  # Z_{2^64}
    ZLm1 = "ZLm1"  # Z_{2^64 - 1}
    Zp = "Zp"  # Z_67

    @property
    def modulus(self) -> int:
        return {Ring.ZL: 1 << 64, Ring.ZLm1: (1 << 64) - 1, Ring.Zp: P}[self]

    @property
    def dtype(self):
        return np.uint8 if self is Ring.Zp else np.uint64

    @property
    def element_bytes(self) -> int:
        return 1 if self is Ring.Zp else 8

    @property
    def wire_tag(self) -> int:
        return {Ring.ZL: 1, Ring.ZLm1: 2, Ring.Zp: 3}[self]

    @classmethod
    def from_wire_tag(cls, tag: int) -> "Ring":
        for r in cls:
            if r.wire_tag == tag:
                return r
        raise RingError(f"unknown ring wire tag {tag}")

    # -- construction -----------------------------------------------------

    def zeros(self, shape) -> np.ndarray:
        return np.zeros(shape, dtype=self.dtype)

    def asarray(self, values) -> np.ndarray:
        """Reduce arbitrary Python/numpy integers into canonical form."""
        arr = np.asarray(values)
        if arr.dtype == object or arr.dtype.kind in "iu" and arr.dtype.itemsize > 8:
            flat = [int(v) % self.modulus for v in arr.reshape(-1)]
            return np.array(flat, dtype=self.dtype).reshape(arr.shape)
        if arr.dtype.kind == "i":
            arr = arr.astype(np.int64)
            if self is Ring.ZL:
                return arr.view(np.uint64).copy()
            if self is Ring.Zp:
                return (arr % P).astype(np.uint8)
            neg = arr < 0
            out = np.abs(arr).astype(np.uint64)
            out = np.where(out == MASK64, np.uint64(0), out)
            return np.where(neg, self.neg(out), out)
        if arr.dtype.kind == "u" or arr.dtype.kind == "b":
            arr = arr.astype(np.uint64)
            if self is Ring.ZL:
                return arr
            if self is Ring.Zp:
                return (arr % np.uint64(P)).astype(np.uint8)
            return np.where(arr == MASK64, np.uint64(0), arr)
        raise RingError(f"cannot interpret dtype {arr.dtype} as ring elements")

    def is_canonical(self, a: np.ndarray) -> bool:
        a = np.asarray(a)
        if a.dtype != self.dtype:
            return False
        if self is Ring.ZLm1:
            return not bool(np.any(a == MASK64))
        if self is Ring.Zp:
            return not bool(np.any(a >= P))
        return True

    # -- arithmetic ---------------------------------------------------------

    def add(self, a, b) -> np.ndarray:
        if self is Ring.ZL:
            return np.add(a, b, dtype=np.uint64)
        if self is Ring.Zp:
            return ((np.asarray(a, np.uint16) + np.asarray(b, np.uint16)) % P).astype(np.uint8)
        a = np.asarray(a, np.uint64)
        s = np.add(a, b, dtype=np.uint64)
        carry = (s < a).astype(np.uint64)
        s = s + carry
        return np.where(s == MASK64, np.uint64(0), s)

    def neg(self, a) -> np.ndarray:
        a = np.asarray(a, self.dtype)
        if self is Ring.ZL:
            return np.subtract(np.uint64(0), a, dtype=np.uint64)
        if self is Ring.Zp:
            return ((P - a.astype(np.uint16)) % P).astype(np.uint8)
        return np.where(a == 0, np.uint64(0), ~a)

    def sub(self, a, b) -> np.ndarray:
        if self is Ring.ZL:
            return np.subtract(a, b, dtype=np.uint64)
        return self.add(a, self.neg(b))

    def mul(self, a, b) -> np.ndarray:
        if self is Ring.ZL:
            return np.multiply(a, b, dtype=np.uint64)
        if self is Ring.Zp:
            return ((np.asarray(a, np.uint16) * np.asarray(b, np.uint16)) % P).astype(np.uint8)
        return _mul_mersenne64(np.asarray(a, np.uint64), np.asarray(b, np.uint64))

    def sum(self, a, axis=None) -> np.ndarray:
        a = np.asarray(a)
        if self is Ring.ZL:
            return np.sum(a, axis=axis, dtype=np.uint64)
        if self is Ring.Zp:
            return (np.sum(a.astype(np.uint64), axis=axis) % P).astype(np.uint8)
        if axis is None:
            a = a.reshape(-1)
            axis = 0
        a = np.moveaxis(a, axis, 0)
        acc = self.zeros(a.shape[1:])
        for row in a:
            acc = self.add(acc, row)
        return acc

    def matmul(self, a, b) -> np.ndarray:
        if self is not Ring.ZL:
            raise RingError("matrix products are only used over Z_{2^64}")
        return np.matmul(np.asarray(a, np.uint64), np.asarray(b, np.uint64))

    # -- wire encoding ------------------------------------------------------

    def encode(self, a) -> bytes:
        a = np.asarray(a, self.dtype)
        if self is Ring.Zp:
            return a.tobytes()
        return a.astype("<u8", copy=False).tobytes()

    def decode(self, data: bytes, shape=None) -> np.ndarray:
        if len(data) % self.element_bytes:
            raise RingError(f"payload of {len(data)} bytes is not a whole number of {self.value} elements")
        if self is Ring.Zp:
            arr = np.frombuffer(data, dtype=np.uint8).copy()
        else:
            arr = np.frombuffer(data, dtype="<u8").astype(np.uint64)
        if not self.is_canonical(arr):
            raise RingError(f"non-canonical {self.value} element on the wire")
        if shape is not None:
            shape = tuple(shape)
            if int(np.prod(shape, dtype=np.int64)) != arr.size:
                raise RingError(f"payload holds {arr.size} elements, expected shape {shape}")
            arr = arr.reshape(shape)
        return arr


def _reduce_m(x: np.ndarray) -> np.ndarray:
    return np.where(x == MASK64, np.uint64(0), x)


def _shift32_m(t: np.ndarray) -> np.ndarray:
    """t * 2^32 mod (2^64 - 1) for any uint64 t."""
    hi = t >> _S32
    lo = (t & _LO32) << _S32
    return Ring.ZLm1.add(_reduce_m(hi), _reduce_m(lo))


def _mul_mersenne64(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # 32-bit limbs keep every partial product inside uint64; 2^64 = 1 (mod 2^64-1).
    a, b = np.broadcast_arrays(a, b)
    ah, al = a >> _S32, a & _LO32
    bh, bl = b >> _S32, b & _LO32
    add = Ring.ZLm1.add
    out = add(_reduce_m(ah * bh), _reduce_m(al * bl))
    out = add(out, _shift32_m(ah * bl))
    out = add(out, _shift32_m(al * bh))
    return out


def to_signed(a) -> np.ndarray:
    """Two's-complement view of Z_{2^64} elements."""
    return np.asarray(a, np.uint64).view(np.int64)


def from_signed(a) -> np.ndarray:
    return np.asarray(a, np.int64).view(np.uint64)


def wrap(a, b) -> np.ndarray:
    """1 where a + b overflows 2^64 (both in Z_{2^64}), else 0, as uint64."""
    a = np.asarray(a, np.uint64)
    return (np.add(a, b, dtype=np.uint64) < a).astype(np.uint64)


def bit_decompose(x, bits: int = ELL) -> np.ndarray:
    """Little-endian bit matrix of shape x.shape + (bits,), dtype uint8."""
    x = np.asarray(x, np.uint64)
    shifts = np.arange(bits, dtype=np.uint64)
    return ((x[..., None] >> shifts) & np.uint64(1)).astype(np.uint8)


@dataclass(frozen=True)
class RingTensor:
    ring: Ring
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if not self.ring.is_canonical(arr):
            raise RingError(f"tensor is not canonical over {self.ring.value}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def of(cls, ring: Ring, values) -> "RingTensor":
        return cls(ring, ring.asarray(values))

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __eq__(self, other):
        return (
            isinstance(other, RingTensor)
            and self.ring is other.ring
            and self.shape == other.shape
            and bool(np.array_equal(self.data, other.data))
        )

    __hash__ = None


@dataclass(frozen=True)
class SecretShare:
    ring: Ring
    part0: RingTensor
    part1: RingTensor


def share(x: RingTensor, rng) -> SecretShare:
    """Split ``x`` into (r, x - r).

    ``rng`` is a :class:`~securenet.prf.PrfKey`, a ``numpy.random.Generator``,
    or an explicit mask array (used by tests to force r).
    """
    ring = x.ring
    if isinstance(rng, np.ndarray) or isinstance(rng, Sequence):
        r = ring.asarray(rng)
        if r.shape != x.shape:
            raise RingError("forced mask shape does not match tensor")
    elif isinstance(rng, np.random.Generator):
        r = random_elements(ring, x.shape, rng)
    else:
        from .prf import prf_expand

        r = prf_expand(rng, ring, int(np.prod(x.shape, dtype=np.int64))).data.reshape(x.shape)
    return SecretShare(ring, RingTensor(ring, r), RingTensor(ring, ring.sub(x.data, r)))


def reconstruct(s: SecretShare) -> RingTensor:
    if s.part0.ring is not s.ring or s.part1.ring is not s.ring:
        raise RingError("share parts belong to different rings")
    if s.part0.shape != s.part1.shape:
        raise RingError(f"share shapes differ: {s.part0.shape} vs {s.part1.shape}")
    return RingTensor(s.ring, s.ring.add(s.part0.data, s.part1.data))


def random_elements(ring: Ring, shape, gen: np.random.Generator) -> np.ndarray:
    """Uniform canonical elements from a numpy Generator (tests, live entropy)."""
    if ring is Ring.Zp:
        return gen.integers(0, P, size=shape, dtype=np.uint8)
    raw = gen.integers(0, 1 << 64, size=shape, dtype=np.uint64, endpoint=False)
    if ring is Ring.ZLm1:
        while True:
            bad = raw == MASK64
            if not bad.any():
                break
            raw[bad] = gen.integers(0, 1 << 64, size=int(bad.sum()), dtype=np.uint64)
    return raw
