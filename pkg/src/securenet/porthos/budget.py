"""Closed-form communication budgets, in bytes, for 64-bit rings and p = 67.

``ell`` is the ring bit width and ``logp`` the bits per Z_p element.
"""

from __future__ import annotations

ELL = 64
LOGP = 8


def _bytes(bits: int) -> int:
    if bits % 8:
        raise ValueError("budget is not a whole number of bytes")
    return bits // 8


def conv2d_bytes(m: int, f: int, i: int = 1, o: int = 1, ell: int = ELL) -> int:
    q = m - f + 1
    return _bytes((2 * m * m * i + 2 * f * f * o * i + q * q * o) * ell)


def matmul_bytes(rows: int, inner: int, cols: int, ell: int = ELL) -> int:
    """Beaver matrix product: both masked operands each way plus one C share."""
    return _bytes((2 * rows * inner + 2 * inner * cols + rows * cols) * ell)


def share_convert_bytes(ell: int = ELL, logp: int = LOGP) -> int:
    return _bytes(3 * ell * logp + 5 * ell)


def compute_msb_bytes(ell: int = ELL, logp: int = LOGP) -> int:
    return _bytes(3 * ell * logp + 9 * ell)


def relu_bytes(ell: int = ELL, logp: int = LOGP) -> int:
    return _bytes(6 * ell * logp + 19 * ell)


def maxpool_bytes(n: int, ell: int = ELL, logp: int = LOGP) -> int:
    return _bytes((6 * ell * logp + 24 * ell) * (n - 1))


def secure_nn_relu_bytes(ell: int = ELL, logp: int = LOGP) -> int:
    """The same ReLU without the PRF-derived fresh shares (reference point)."""
    return _bytes(8 * ell * logp + 24 * ell)
