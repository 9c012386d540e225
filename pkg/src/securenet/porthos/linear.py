"""Bilinear protocols (Beaver products), fresh sharing by the helper, truncation."""

from __future__ import annotations

from math import prod

import numpy as np

from .. import kernels
from ..ring import Ring
from .context import P0, P1, P2, ProtocolContext, ProtocolError

ZL = Ring.ZL


def fresh_share(ctx: ProtocolContext, ring: Ring, shape, values=None):
    """P2 hands P0/P1 a new additive sharing of ``values`` (P2 only).

    ``shape[0]`` counts independent instances.  For each instance one share
    comes from a PRF key P2 already shares with its receiver, so only the
    complementary share crosses the wire.  Which side gets the PRF share
    alternates with the instance counter, so both links carry half the load.
    Returns the caller's share (``None`` on P2).
    """
    shape = tuple(shape)
    n, inner = shape[0], shape[1:]
    parity = (ctx.instance_counter + np.arange(n)) % 2
    ctx.instance_counter += n
    prf_p0 = parity == 0  # P0's share from k0, P1's share sent
    prf_p1 = ~prf_p0
    n0 = int(prf_p0.sum())
    n1 = n - n0
    if ctx.role == P2:
        values = np.asarray(values, dtype=ring.dtype).reshape(shape)
        s0 = ctx.draw("k0", ring, (n0,) + inner)
        s1 = ctx.draw("k1", ring, (n1,) + inner)
        ctx.send(P1, ring, ring.sub(values[prf_p0], s0))
        ctx.send(P0, ring, ring.sub(values[prf_p1], s1))
        ctx.meters.fresh_shares.append((n1, n0))
        return None
    out = ring.zeros(shape)
    if ctx.role == P0:
        out[prf_p0] = ctx.draw("k0", ring, (n0,) + inner)
        out[prf_p1] = ctx.recv(P2, ring, (n1,) + inner)
    else:
        out[prf_p1] = ctx.draw("k1", ring, (n1,) + inner)
        out[prf_p0] = ctx.recv(P2, ring, (n0,) + inner)
    return out


def _flat_pair(e, f):
    return np.concatenate([np.asarray(e, np.uint64).reshape(-1), np.asarray(f, np.uint64).reshape(-1)])


def beaver_product(ctx: ProtocolContext, x, y, op, out_shape) -> np.ndarray:
    """Shares of ``op(X, Y)`` for any bilinear ``op`` over Z_{2^64}.

    P2 derives masks A, B (P0's parts from k0, P1's from k1) and P0's part
    of C from k0, then sends P1 its part of C = op(A, B).  P0 and P1 open
    E = X - A and F = Y - B and compute
    ``Z_j = -j*op(E,F) + op(X_j,F) + op(E,Y_j) + C_j + U_j``
    where U is a zero sharing from k01.
    """
    x_shape, y_shape, out_shape = np.shape(x), np.shape(y), tuple(out_shape)
    if ctx.role == P2:
        a0 = ctx.draw("k0", ZL, x_shape)
        b0 = ctx.draw("k0", ZL, y_shape)
        c0 = ctx.draw("k0", ZL, out_shape)
        a1 = ctx.draw("k1", ZL, x_shape)
        b1 = ctx.draw("k1", ZL, y_shape)
        c = op(ZL.add(a0, a1), ZL.add(b0, b1))
        ctx.send(P1, ZL, ZL.sub(c, c0))
        return ctx.placeholder(ZL, out_shape)
    key = "k0" if ctx.role == P0 else "k1"
    a = ctx.draw(key, ZL, x_shape)
    b = ctx.draw(key, ZL, y_shape)
    c = ctx.draw("k0", ZL, out_shape) if ctx.role == P0 else ctx.recv(P2, ZL, out_shape)
    mine = _flat_pair(ZL.sub(x, a), ZL.sub(y, b))
    theirs = ctx.exchange(ZL, mine)
    both = ZL.add(mine, theirs)
    nx = prod(x_shape)
    e = both[:nx].reshape(x_shape)
    f = both[nx:].reshape(y_shape)
    z = ZL.add(op(x, f), op(e, y))
    z = ZL.add(z, c)
    if ctx.role == P1:
        z = ZL.sub(z, op(e, f))
    z = ZL.add(z, ctx.zero_share(ZL, out_shape))
    if z.shape != out_shape:
        raise ProtocolError(f"bilinear op produced {z.shape}, expected {out_shape}")
    return z


def _matmul(a, b):
    return np.matmul(np.asarray(a, np.uint64), np.asarray(b, np.uint64))


def _mul(a, b):
    return np.multiply(a, b, dtype=np.uint64)


def matmul_3pc(ctx: ProtocolContext, a, b) -> np.ndarray:
    a_shape, b_shape = np.shape(a), np.shape(b)
    if len(a_shape) != 2 or len(b_shape) != 2 or a_shape[1] != b_shape[0]:
        raise ProtocolError(f"MatMul shapes {a_shape} x {b_shape} do not chain")
    return beaver_product(ctx, a, b, _matmul, (a_shape[0], b_shape[1]))


def mul_3pc(ctx: ProtocolContext, a, b) -> np.ndarray:
    """Elementwise product with numpy broadcasting."""
    out_shape = np.broadcast_shapes(np.shape(a), np.shape(b))
    return beaver_product(ctx, a, b, _mul, out_shape)


def conv2d_3pc(ctx: ProtocolContext, x, w, attrs=None) -> np.ndarray:
    """Shares of Conv(X, W) for NHWC input and HWIO filter.

    Padding is applied locally first; the Beaver masks then have exactly the
    size of the (padded) input and the filter, which is what makes the
    traffic ``(2*m^2*i + 2*f^2*o*i + q^2*o)`` ring elements for stride 1.
    """
    attrs = dict(attrs or {})
    x = np.asarray(x)
    w_shape = np.shape(w)
    if x.ndim == 2 and len(w_shape) == 2:  # single-channel m x m input, f x f filter
        x = x[None, :, :, None]
        w = np.asarray(w)[:, :, None, None]
        return conv2d_3pc(ctx, x, w, attrs)[0, :, :, 0]
    fh, fw, ci, co = w_shape
    if x.shape[1] < fh or x.shape[2] < fw:
        if attrs.get("padding", "VALID") == "VALID":
            raise ProtocolError(f"filter {fh}x{fw} larger than input {x.shape[1]}x{x.shape[2]}")
    strides = tuple(attrs.get("strides", (1, 1)))
    x = kernels.pad_spatial(x, fh, fw, strides, attrs.get("padding", "VALID"))
    oh = (x.shape[1] - fh) // strides[0] + 1
    ow = (x.shape[2] - fw) // strides[1] + 1

    def op(xx, ww):
        return np.matmul(kernels.im2col(xx, fh, fw, strides), kernels.filter_matrix(ww))

    return beaver_product(ctx, x, w, op, (x.shape[0], oh, ow, co))


def fused_batchnorm_3pc(ctx: ProtocolContext, a, b, c) -> np.ndarray:
    """Shares of ``B[n] * A[..., n] + C[n]`` at scale 2s (caller truncates)."""
    if np.shape(b)[-1] != np.shape(a)[-1] or np.shape(c)[-1] != np.shape(a)[-1]:
        raise ProtocolError("batch-norm parameters do not match the channel count")
    prodz = mul_3pc(ctx, a, b)
    if ctx.role == P2:
        return prodz
    return ZL.add(prodz, c)


def scaledown_3pc(ctx: ProtocolContext, a, s: int) -> np.ndarray:
    """Each of P0/P1 arithmetically shifts its own share (no messages).

    For a value v with |v| well below 2^63 the result reconstructs to
    floor(v / 2^s) or one less, except with probability about |v| / 2^64
    where the two shares' signed sum wraps.
    """
    if ctx.role == P2:
        return ctx.placeholder(ZL, np.shape(a))
    ctx.count("scaledown_elems", np.size(a))
    return (np.asarray(a, np.uint64).view(np.int64) >> np.int64(s)).view(np.uint64)


def add_public(ctx: ProtocolContext, a, k) -> np.ndarray:
    """Add a public constant (P0 adds it, P1 does nothing)."""
    if ctx.role == P0:
        return ZL.add(a, ZL.asarray(k))
    return np.asarray(a, np.uint64)
