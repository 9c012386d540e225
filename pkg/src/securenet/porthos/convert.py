"""ShareConvert (Z_{2^64} -> Z_{2^64-1}) and ComputeMSB (Z_{2^64-1} -> bit over Z_{2^64})."""

from __future__ import annotations

import numpy as np

from ..ring import ELL, Ring, bit_decompose, wrap
from .compare import private_compare
from .context import P0, P1, P2, ProtocolContext
from .linear import fresh_share, mul_3pc

ZL, ZLm1, Zp = Ring.ZL, Ring.ZLm1, Ring.Zp


def share_convert(ctx: ProtocolContext, a) -> np.ndarray:
    """Re-share ``a`` (over Z_{2^64}) as ``a mod (2^64 - 1)``.

    The result equals ``a`` for every ``a != 2^64 - 1``; that single value
    maps to 0.  Per element: P0 and P1 send 8 bytes each to P2, P2 sends
    64 + 8 + 8 bytes of fresh shares, and the comparison costs 128 bytes.
    """
    shape = np.shape(a)
    n = int(np.prod(shape, dtype=np.int64))
    with ctx.scope("share_convert"):
        if ctx.role == P2:
            at0 = ctx.recv(P0, ZL, (n,))
            at1 = ctx.recv(P1, ZL, (n,))
            x = ZL.add(at0, at1)
            delta = wrap(at0, at1)
            fresh_share(ctx, Zp, (n, ELL), bit_decompose(x))
            fresh_share(ctx, ZLm1, (n,), delta)
            private_compare(ctx, None, None, None, ZLm1, shape=(n, ELL))
            return ctx.placeholder(ZLm1, shape)

        j = ctx.j
        a = np.asarray(a, np.uint64).reshape(n)
        # common randomness of P0 and P1
        r0 = ctx.draw("k01", ZL, (n,))
        r1 = ctx.draw("k01", ZL, (n,))
        eta2 = ctx.draw_bits("k01", (n,)).astype(bool)
        u = ctx.zero_share(ZLm1, (n,))
        rj = r0 if j == 0 else r1
        r = ZL.add(r0, r1)
        alpha = wrap(r0, r1)

        ctx.send(P2, ZL, ZL.add(a, rj))
        beta_j = wrap(a, rj)
        x_bits = fresh_share(ctx, Zp, (n, ELL))
        delta_j = fresh_share(ctx, ZLm1, (n,))
        # eta' = eta2 XOR (x > r - 1)
        eta_p = private_compare(ctx, x_bits, ZL.sub(r, np.uint64(1)), eta2, ZLm1)

        # wrap(a, r) = 1 - [x >= r]; when r = 0 the comparison above is always
        # false, so the correction bit flips
        flip = eta2 ^ (r == 0)
        lead = np.uint64(1 if j == 0 else 0)
        eta_j = np.where(flip, ZLm1.add(ZLm1.neg(eta_p), lead), eta_p)
        theta = ZLm1.add(ZLm1.asarray(beta_j), delta_j)
        theta = ZLm1.add(theta, eta_j)
        if j == 0:
            theta = ZLm1.sub(theta, ZLm1.add(ZLm1.asarray(alpha), np.uint64(1)))
        y = ZLm1.sub(ZLm1.asarray(a), theta)
        return ZLm1.add(y, u).reshape(shape)


def compute_msb(ctx: ProtocolContext, a) -> np.ndarray:
    """Shares over Z_{2^64} of bit 63 of ``a`` (shared over Z_{2^64-1}).

    Uses MSB(a) = LSB(2a mod (2^64-1)): doubling either stays even or wraps
    once past an odd modulus.  The LSB is recovered from a masked opening
    ``c = 2a + r`` and a comparison of r against c.
    """
    shape = np.shape(a)
    n = int(np.prod(shape, dtype=np.int64))
    with ctx.scope("compute_msb"):
        if ctx.role == P2:
            r = ZLm1.add(ctx.draw("k0", ZLm1, (n,)), ctx.draw("k1", ZLm1, (n,)))
            fresh_share(ctx, Zp, (n, ELL), bit_decompose(r))
            fresh_share(ctx, ZL, (n,), r & np.uint64(1))
            private_compare(ctx, None, None, None, ZL, shape=(n, ELL))
            mul_3pc(ctx, ZL.zeros((n,)), ZL.zeros((n,)))
            return ctx.placeholder(ZL, shape)

        j = ctx.j
        a = np.asarray(a, np.uint64).reshape(n)
        rj = ctx.draw("k0" if j == 0 else "k1", ZLm1, (n,))
        r_bits = fresh_share(ctx, Zp, (n, ELL))
        r_lsb = fresh_share(ctx, ZL, (n,))
        cj = ZLm1.add(ZLm1.add(a, a), rj)
        c = ZLm1.add(cj, ctx.exchange(ZLm1, cj))
        beta = ctx.draw_bits("k01", (n,)).astype(bool)
        u = ctx.zero_share(ZL, (n,))
        # beta' = beta XOR (r > c); r > c exactly when 2a + r wrapped
        beta_p = private_compare(ctx, r_bits, c, beta, ZL)
        lead = np.uint64(1 if j == 0 else 0)
        gamma = np.where(beta, ZL.add(ZL.neg(beta_p), lead), beta_p)
        c_lsb = (c & np.uint64(1)).astype(bool)
        delta = np.where(c_lsb, ZL.add(ZL.neg(r_lsb), lead), r_lsb)
        theta = mul_3pc(ctx, gamma, delta)
        out = ZL.sub(ZL.add(gamma, delta), ZL.add(theta, theta))
        return ZL.add(out, u).reshape(shape)
