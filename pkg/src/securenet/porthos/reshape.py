"""Convolution as a matrix product: filter, input and output reshaping.

The 2-D forms mirror a single-channel ``m x m`` input and ``f x f`` filter;
the batched NHWC/HWIO forms in :mod:`securenet.kernels` generalize them with
the same row-major window ordering.
"""

from __future__ import annotations

import numpy as np

from .. import kernels


def reshape_filter(y: np.ndarray) -> np.ndarray:
    """``f x f`` filter -> ``f^2 x 1`` column, row-major (HWIO -> (f^2 ci) x co)."""
    y = np.asarray(y)
    if y.ndim == 4:
        return kernels.filter_matrix(y)
    if y.ndim != 2 or y.shape[0] != y.shape[1]:
        raise ValueError(f"expected a square filter, got {y.shape}")
    return y.reshape(-1, 1)


def reshape_input(x: np.ndarray, f: int) -> np.ndarray:
    """``m x m`` input -> ``q^2 x f^2`` windows with q = m - f + 1.

    Row ``i*q + j`` holds the window at (i, j); column ``k*f + l`` holds
    ``x[k + i][l + j]``.
    """
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"expected a square input, got {x.shape}")
    m = x.shape[0]
    if m < f:
        raise ValueError(f"filter size {f} exceeds input size {m}")
    q = m - f + 1
    cols = kernels.im2col(x[None, :, :, None], f, f)
    return cols.reshape(q * q, f * f)


def reshape_output(z: np.ndarray, q: int | None = None) -> np.ndarray:
    """``q^2 x 1`` column -> ``q x q`` matrix, row-major."""
    z = np.asarray(z).reshape(-1)
    if q is None:
        q = int(round(np.sqrt(z.size)))
    if q * q != z.size:
        raise ValueError(f"{z.size} elements do not form a {q}x{q} output")
    return z.reshape(q, q)
