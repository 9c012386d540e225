"""Data-movement kernels shared by the plaintext interpreters and the 3PC executor.

Everything here only copies or rearranges elements, so it applies equally to
plaintext tensors and to one party's additive share.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .ir.hlil import IRError, conv_padding, pool_attrs


def pad_spatial(x: np.ndarray, fh: int, fw: int, strides, padding: str) -> np.ndarray:
    if padding == "VALID":
        return x
    ph = conv_padding(x.shape[1], fh, strides[0], padding)
    pw = conv_padding(x.shape[2], fw, strides[1], padding)
    return np.pad(x, ((0, 0), ph, pw, (0, 0)))


def im2col(x: np.ndarray, fh: int, fw: int, strides=(1, 1)) -> np.ndarray:
    """NHWC input -> (N, OH, OW, fh*fw*C) patches.

    Column ``(k*fw + l)*C + c`` holds ``x[n, i*sh + k, j*sw + l, c]``, which
    matches :func:`filter_matrix`'s row order.
    """
    sh, sw = strides
    win = sliding_window_view(x, (fh, fw), axis=(1, 2))  # N, H', W', C, fh, fw
    win = win[:, ::sh, ::sw]
    n, oh, ow, c = win.shape[:4]
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n, oh, ow, fh * fw * c)


def filter_matrix(w: np.ndarray) -> np.ndarray:
    """HWIO filter -> (fh*fw*Ci, Co)."""
    fh, fw, ci, co = w.shape
    return w.reshape(fh * fw * ci, co)


def conv_operands(x: np.ndarray, w_shape, attrs: dict) -> np.ndarray:
    """Padded and windowed input ready to multiply with ``filter_matrix``."""
    strides = tuple(attrs.get("strides", (1, 1)))
    x = pad_spatial(x, w_shape[0], w_shape[1], strides, attrs.get("padding", "VALID"))
    return im2col(x, w_shape[0], w_shape[1], strides)


def pool_windows(x: np.ndarray, attrs: dict) -> np.ndarray:
    """NHWC -> (N, OH, OW, C, a*b): candidates of each window, row-major."""
    (a, b), (sa, sb) = pool_attrs(attrs)
    win = sliding_window_view(x, (a, b), axis=(1, 2))[:, ::sa, ::sb]
    n, oh, ow, c = win.shape[:4]
    return np.ascontiguousarray(win).reshape(n, oh, ow, c, a * b)


def runtime_shape(target, batch: int) -> tuple:
    """Declared dims carry batch 1; substitute the live batch size."""
    target = tuple(target)
    return (batch,) + target[1:] if target else target


def library_op(op: str, inputs: list, attrs: dict, batch: int) -> np.ndarray:
    """Share-local data movement (no arithmetic on values)."""
    x = inputs[0]
    if op == "Reshape":
        return x.reshape(runtime_shape(attrs["shape"], batch))
    if op == "Flatten":
        return x.reshape(x.shape[0], -1)
    if op == "Pad":
        return np.pad(x, [tuple(p) for p in attrs["pads"]])
    if op == "Transpose":
        return np.ascontiguousarray(x.transpose(tuple(attrs["perm"])))
    if op == "Concat":
        return np.concatenate(inputs, axis=attrs.get("axis", -1))
    if op == "Squeeze":
        axes = attrs.get("axes")
        return np.squeeze(x) if axes is None else np.squeeze(x, axis=tuple(axes))
    if op == "BroadcastTo":
        return np.ascontiguousarray(np.broadcast_to(x, tuple(attrs["shape"])))
    raise IRError(f"{op} is not a library op")
