"""Micro-benchmarks that compare metered traffic with the closed-form budgets."""

from __future__ import annotations

import numpy as np

from ..porthos import budget
from ..porthos.activation import maxpool_n, relu
from ..porthos.context import P0, P1, P2
from ..porthos.executor import share_owned
from ..porthos.linear import conv2d_3pc
from .session import DEFAULT_SEED, run_three


def _session(body, seed):
    res = run_three(body, seed=seed)
    res.raise_first()
    return res


def bench_conv(m: int, f: int, i: int = 1, o: int = 1, seed: bytes = DEFAULT_SEED) -> dict:
    """Metered Conv2d payload (all channels) against the formula."""
    rng = np.random.default_rng(0)
    x = rng.integers(0, 1 << 20, size=(1, m, m, i), dtype=np.uint64)
    w = rng.integers(0, 1 << 20, size=(f, f, i, o), dtype=np.uint64)

    def body(ctx, _):
        xs = share_owned(ctx, P1, x.shape, x if ctx.role == P1 else None)
        ws = share_owned(ctx, P0, w.shape, w if ctx.role == P0 else None)
        with ctx.scope("conv"):
            conv2d_3pc(ctx, xs, ws, {"strides": (1, 1), "padding": "VALID"})

    measured = _session(body, seed).scope_bytes("conv")
    expected = budget.conv2d_bytes(m, f, i, o)
    return {"measured": measured, "formula": expected, "residual": measured - expected}


def bench_relu(n: int = 1000, seed: bytes = DEFAULT_SEED) -> dict:
    """Per-ReLU payload for ``n`` parallel ReLUs.

    ``fresh_share_calls`` lists, for every fresh sharing P2 made, how many
    instances it sent to P0 and to P1.
    """
    rng = np.random.default_rng(1)
    a = rng.integers(0, 1 << 64, size=n, dtype=np.uint64)

    def body(ctx, _):
        s = share_owned(ctx, P1, a.shape, a if ctx.role == P1 else None)
        with ctx.scope("relu"):
            relu(ctx, s)

    res = _session(body, seed)
    per = res.scope_bytes("relu") / n
    calls = [list(c) for c in res.contexts[P2].meters.fresh_shares]
    return {
        "n": n,
        "per_relu": per,
        "formula": budget.relu_bytes(),
        "secure_nn": budget.secure_nn_relu_bytes(),
        "residual": per - budget.relu_bytes(),
        "fresh_share_calls": calls,
    }


def bench_maxpool(n: int = 4, seed: bytes = DEFAULT_SEED) -> dict:
    """Comparison rounds for one n-way max (one DReLU per round)."""
    rng = np.random.default_rng(2)
    vals = rng.integers(0, 1 << 40, size=(n, 1), dtype=np.uint64)

    def body(ctx, _):
        shares = [share_owned(ctx, P1, (1,), v if ctx.role == P1 else None) for v in vals]
        with ctx.scope("maxpool"):
            maxpool_n(ctx, shares)
        return ctx.meters.counters["drelu"]

    res = _session(body, seed)
    rounds = res.results[P0]
    return {"n": n, "rounds": rounds, "expected_rounds": n - 1, "residual": rounds - (n - 1),
            "bytes": res.scope_bytes("maxpool")}


def run_all(seed: bytes = DEFAULT_SEED, relu_n: int = 1000) -> dict:
    return {
        "conv_m5_f2": bench_conv(5, 2, seed=seed),
        "relu": bench_relu(relu_n, seed=seed),
        "maxpool_n4": bench_maxpool(4, seed=seed),
    }
