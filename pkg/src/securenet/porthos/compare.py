"""PrivateCompare over Z_67 bit shares.

P0 and P1 hold additive shares (mod 67) of the bits of secret ``x`` and
both know a public ``r`` and a random bit ``beta``.  P2 learns
``beta XOR (x > r)`` and nothing about x or r beyond it: every masked
value it sees is either a uniformly random nonzero element or zero, in a
random order.
"""

from __future__ import annotations

import numpy as np

from ..ring import ELL, P, Ring, bit_decompose
from .context import P0, P1, P2, ProtocolContext, ProtocolError
from .linear import fresh_share

Zp = Ring.Zp


def _masked_terms(ctx: ProtocolContext, x_bits, r, beta) -> np.ndarray:
    """This party's share of the blinded, shuffled comparison terms."""
    n, bits = x_bits.shape
    j = ctx.j
    blind = ctx.draw_nonzero_zp("k01", (n, bits)).astype(np.int64)
    u = ctx.draw_nonzero_zp("k01", (n, bits)).astype(np.int64)
    zero = ctx.draw("k01", Zp, (n, bits)).astype(np.int64)
    perm = ctx.draw_permutations("k01", n, bits)

    r = np.asarray(r, np.uint64).reshape(n)
    beta = np.asarray(beta, np.uint8).reshape(n).astype(bool)
    top = np.uint64((1 << bits) - 1) if bits < ELL else np.uint64(0xFFFFFFFFFFFFFFFF)
    special = beta & (r == top)
    # beta = 1 tests x <= r, i.e. x < r + 1
    t = np.where(beta, (r + np.uint64(1)) & top, r)
    tb = bit_decompose(t, bits).astype(np.int64)
    x = np.asarray(x_bits, np.int64)

    w = x + j * tb - 2 * tb * x  # shares of x_i XOR t_i
    above = np.cumsum(w[:, ::-1], axis=1)[:, ::-1] - w  # sum over more significant bits
    c_lt = j * tb - x + j + above  # zero at i iff x_i=1, t_i=0, higher bits equal
    c_ge = -j * tb + x + j + above  # zero at i iff x_i=0, t_i=1, higher bits equal
    c = np.where(beta[:, None], c_ge, c_lt)
    if special.any():
        # x <= 2^bits - 1 always holds: exactly one zero term, the rest equal 1
        cs = (1 - j) * (u[special] + 1) - j * u[special]
        cs[:, 0] = u[special, 0] if j == 0 else -u[special, 0]
        c[special] = cs
    d = blind * c + (zero if j == 0 else -zero)
    d = np.take_along_axis(d % P, perm, axis=1)
    return d.astype(np.uint8)


def compare_to_helper(ctx: ProtocolContext, x_bits, r, beta, shape=None):
    """Run the comparison; P2 returns ``beta XOR (x > r)`` as a uint8 array.

    P0/P1 pass ``x_bits`` with shape (n, bits); P2 passes ``shape=(n, bits)``.
    """
    if ctx.role == P2:
        n, bits = shape
        d0 = ctx.recv(P0, Zp, (n, bits))
        d1 = ctx.recv(P1, Zp, (n, bits))
        return np.any(Zp.add(d0, d1) == 0, axis=1).astype(np.uint8)
    x_bits = np.asarray(x_bits)
    if x_bits.ndim != 2 or x_bits.dtype != np.uint8 or np.any(x_bits >= P):
        raise ProtocolError("bit shares must be an (n, bits) array over Z_67")
    if not 1 <= x_bits.shape[1] <= ELL:
        raise ProtocolError(f"bit width {x_bits.shape[1]} out of range")
    ctx.send(P2, Zp, _masked_terms(ctx, x_bits, r, beta))
    return None


def private_compare(ctx: ProtocolContext, x_bits, r, beta, out_ring: Ring = Ring.ZL, shape=None):
    """Shares over ``out_ring`` of ``beta XOR (x > r)``.

    ``x_bits``: (n, bits) shares over Z_67 (P0/P1); ``r``: public to P0/P1;
    ``beta``: bit known to P0/P1.  P2 passes ``shape=(n, bits)`` and gets
    ``None``.
    """
    with ctx.scope("private_compare"):
        if ctx.role == P2:
            res = compare_to_helper(ctx, None, None, None, shape)
            return fresh_share(ctx, out_ring, (shape[0],), res)
        n = np.shape(x_bits)[0]
        compare_to_helper(ctx, x_bits, r, beta)
        ctx.count("comparisons", n)
        return fresh_share(ctx, out_ring, (n,))
