"""Comparison-based layers: DReLU, ReLU, MaxPool, ArgMax, and share-local AvgPool."""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..fixedpoint import rho
from ..ring import Ring
from .context import P2, ProtocolContext, ProtocolError
from .convert import compute_msb, share_convert
from .linear import add_public, mul_3pc, scaledown_3pc

ZL = Ring.ZL


def drelu(ctx: ProtocolContext, a) -> np.ndarray:
    """Shares of 1 if a >= 0 else 0 (two's complement, |a| < 2^63).

    Evaluated as ``1 - MSB(a - 1)``.  Shifting by one moves the single value
    that Z_{2^64-1} cannot hold (2^64-1, i.e. a = 0) to where its reduction
    (0, MSB 0) gives the right answer, so a = -1 needs no special casing.
    """
    with ctx.scope("drelu"):
        ctx.count("drelu", np.size(a))
        shifted = a if ctx.role == P2 else add_public(ctx, a, -1)
        msb = compute_msb(ctx, share_convert(ctx, shifted))
        if ctx.role == P2:
            return msb
        return add_public(ctx, ZL.neg(msb), 1)


def relu(ctx: ProtocolContext, a) -> np.ndarray:
    ctx.count("relu", np.size(a))
    d = drelu(ctx, a)
    with ctx.scope("select"):
        return mul_3pc(ctx, d, a)


def _tournament(ctx: ProtocolContext, cands: list, with_index: bool):
    """Sequential max over candidates; ties keep the earlier one."""
    cur = cands[0]
    idx = ctx.placeholder(ZL, np.shape(cur))  # index 0, shared as (0, 0)
    for k in range(1, len(cands)):
        cand = cands[k]
        diff = ZL.sub(cur, cand)
        keep = drelu(ctx, diff)
        with ctx.scope("select"):
            if with_index:
                didx = add_public(ctx, idx, -k)
                both = mul_3pc(ctx, np.stack([keep, keep]), np.stack([diff, didx]))
                cur = ZL.add(cand, both[0])
                idx = add_public(ctx, both[1], k)
            else:
                cur = ZL.add(cand, mul_3pc(ctx, keep, diff))
    return cur, idx


def maxpool_n(ctx: ProtocolContext, values: list) -> np.ndarray:
    """Shares of the elementwise max of a list of equally shaped shares."""
    if not values:
        raise ProtocolError("max of an empty list")
    return _tournament(ctx, list(values), with_index=False)[0]


def argmax_n(ctx: ProtocolContext, values: list) -> tuple[np.ndarray, np.ndarray]:
    """Shares of (max, first index attaining it)."""
    if not values:
        raise ProtocolError("argmax of an empty list")
    return _tournament(ctx, list(values), with_index=True)


def maxpool_3pc(ctx: ProtocolContext, x, attrs) -> np.ndarray:
    win = kernels.pool_windows(np.asarray(x), attrs)
    return maxpool_n(ctx, [win[..., k] for k in range(win.shape[-1])])


def argmax_3pc(ctx: ProtocolContext, x) -> np.ndarray:
    """Index of the maximum along the last axis."""
    x = np.asarray(x)
    return argmax_n(ctx, [x[..., k] for k in range(x.shape[-1])])[1]


def avgpool_3pc(ctx: ProtocolContext, x, attrs, s: int) -> np.ndarray:
    """Window sum times the public reciprocal rho_s(1/n), then truncation."""
    win = kernels.pool_windows(np.asarray(x), attrs)
    if ctx.role == P2:
        return ctx.placeholder(ZL, win.shape[:-1])
    total = np.sum(win, axis=-1, dtype=np.uint64)
    return scaledown_3pc(ctx, ZL.mul(total, rho(1.0 / win.shape[-1], s)), s)
