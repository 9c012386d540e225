"""Helpers for driving protocols directly from tests."""

import numpy as np

from securenet.harness.session import run_three
from securenet.porthos.context import P0, P1
from securenet.ring import Ring, random_elements


def split(value, ring=Ring.ZL, seed=0):
    """Plain two-way split of ``value`` for feeding protocols directly."""
    value = np.asarray(value, ring.dtype)
    r = random_elements(ring, value.shape, np.random.default_rng(seed))
    return [r, ring.sub(value, r)]


def run_protocol(fn, shares, *extra, seed=b"test-protocol"):
    """Run ``fn(ctx, share, *extra)`` on all parties; P2 gets a zero placeholder."""

    def body(ctx, arg):
        return fn(ctx, arg, *extra)

    res = run_three(body, (shares[0], shares[1], np.zeros_like(shares[0])), seed=seed)
    res.raise_first()
    return res


def opened(res, ring=Ring.ZL):
    return ring.add(res.results[P0], res.results[P1])
