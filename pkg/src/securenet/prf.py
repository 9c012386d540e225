"""Deterministic PRF streams (AES-128 in counter mode).

A :class:`PrfKey` is a 128-bit key plus a stream label and a block counter.
Two parties holding copies of the same key draw identical values as long as
they make the same sequence of calls, which is how the protocols realize
"common randomness" without communication.
"""

from __future__ import annotations

import hashlib
import os
import struct

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .ring import MASK64, P, Ring, RingTensor

BLOCK = 16
_ZP_ACCEPT = 3 * P  # 201: largest multiple of 67 that fits in a byte


class PrfExhausted(RuntimeError):
    pass


class PrfKey:
    """AES-CTR keystream with an explicit 64-bit block counter."""

    def __init__(self, key: bytes, label: str = "", counter: int = 0):
        if len(key) != 16:
            raise ValueError("PRF keys are 128 bits")
        self.key = bytes(key)
        self.label = label
        self.counter = counter
        self._label_id = hashlib.sha256(label.encode()).digest()[:8]

    @classmethod
    def derive(cls, seed: bytes, label: str) -> "PrfKey":
        return cls(hashlib.sha256(b"securenet/prf-key\x00" + seed + label.encode()).digest()[:16], label)

    @classmethod
    def fresh(cls, label: str = "") -> "PrfKey":
        return cls(os.urandom(16), label)

    def copy(self) -> "PrfKey":
        return PrfKey(self.key, self.label, self.counter)

    def __repr__(self):
        return f"PrfKey(label={self.label!r}, counter={self.counter})"

    def keystream(self, nbytes: int) -> bytes:
        """Raw bytes; always consumes whole blocks."""
        blocks = -(-nbytes // BLOCK)
        if self.counter + blocks > 1 << 64:
            raise PrfExhausted(f"stream {self.label!r} has no room for {blocks} more blocks")
        nonce = self._label_id + struct.pack(">Q", self.counter)
        enc = Cipher(algorithms.AES(self.key), modes.CTR(nonce)).encryptor()
        self.counter += blocks
        return enc.update(bytes(blocks * BLOCK))[:nbytes]


def _draw_u64(key: PrfKey, count: int) -> np.ndarray:
    return np.frombuffer(key.keystream(8 * count), dtype="<u8").astype(np.uint64)


def _rejection(key: PrfKey, count: int, draw, accept) -> np.ndarray:
    out = []
    have = 0
    want = count
    while have < count:
        # over-draw a little so a second round is rare
        raw = draw(key, want + want // 4 + 8)
        ok = raw[accept(raw)]
        out.append(ok)
        have += ok.size
        want = count - have
    return np.concatenate(out)[:count] if out else np.zeros(0)


def prf_expand(key: PrfKey, ring: Ring, count: int) -> RingTensor:
    """``count`` uniform canonical elements of ``ring`` drawn from ``key``."""
    return RingTensor(ring, expand_array(key, ring, count))


def expand_array(key: PrfKey, ring: Ring, count, shape=None) -> np.ndarray:
    """Array form of :func:`prf_expand`; ``shape`` reshapes the result."""
    if shape is not None:
        count = int(np.prod(shape, dtype=np.int64))
        shape = tuple(shape)
    else:
        shape = (count,)
    if count == 0:
        return ring.zeros(shape)
    if ring is Ring.ZL:
        out = _draw_u64(key, count)
    elif ring is Ring.ZLm1:
        out = _rejection(key, count, _draw_u64, lambda v: v != MASK64).astype(np.uint64)
    else:
        raw = _rejection(
            key,
            count,
            lambda k, n: np.frombuffer(k.keystream(n), dtype=np.uint8),
            lambda v: v < _ZP_ACCEPT,
        )
        out = (raw.astype(np.uint8) % P).astype(np.uint8)
    return out.reshape(shape)


def expand_nonzero_zp(key: PrfKey, shape) -> np.ndarray:
    """Uniform elements of Z_67^* (bytes below 198 = 3*66, mapped to 1..66)."""
    count = int(np.prod(shape, dtype=np.int64))
    raw = _rejection(
        key,
        count,
        lambda k, n: np.frombuffer(k.keystream(n), dtype=np.uint8),
        lambda v: v < 3 * (P - 1),
    )
    return ((raw.astype(np.uint8) % (P - 1)) + 1).astype(np.uint8).reshape(shape)


def expand_bits(key: PrfKey, shape) -> np.ndarray:
    count = int(np.prod(shape, dtype=np.int64))
    raw = np.frombuffer(key.keystream(-(-count // 8)), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:count].reshape(shape)


def expand_permutations(key: PrfKey, rows: int, n: int) -> np.ndarray:
    """``rows`` independent permutations of range(n) (argsort of random keys)."""
    if rows * n == 0:
        return np.zeros((rows, n), dtype=np.int64)
    keys = _draw_u64(key, rows * n).reshape(rows, n)
    return np.argsort(keys, axis=1, kind="stable")
