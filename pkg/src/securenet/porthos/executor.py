"""Secret-shared evaluation of an LLIL program.

Input ownership: P0 owns the model weights and P1 owns the images.  Both
are shared without communication: the non-owner's share is drawn from k01,
which the owner also holds and subtracts from its plaintext.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..ir.analysis import liveness
from ..ir.hlil import LIBRARY_OPS, IRError, LLILProgram
from ..ring import Ring
from .activation import argmax_3pc, avgpool_3pc, maxpool_3pc, relu
from .context import P0, P1, P2, ProtocolContext, ProtocolError
from .linear import conv2d_3pc, fused_batchnorm_3pc, matmul_3pc, scaledown_3pc

ZL = Ring.ZL


def share_owned(ctx: ProtocolContext, owner: int, shape, value=None) -> np.ndarray:
    """Share a tensor held in the clear by ``owner`` (P0 or P1)."""
    shape = tuple(shape)
    if ctx.role == P2:
        return ctx.placeholder(ZL, shape)
    mask = ctx.draw("k01", ZL, shape)
    if ctx.role != owner:
        return mask
    value = np.asarray(value, np.uint64)
    if value.shape != shape:
        raise ProtocolError(f"owned tensor has shape {value.shape}, expected {shape}")
    return ZL.sub(value, mask)


def share_weights(ctx: ProtocolContext, program: LLILProgram, weights: dict | None) -> dict:
    out = {}
    for name in program.params:
        value = weights[name] if ctx.role == P0 else None
        out[name] = share_owned(ctx, P0, program.dims(name), value)
    return out


def reveal(ctx: ProtocolContext, share) -> np.ndarray | None:
    """P0 and P1 open a value to each other; P2 learns nothing."""
    if ctx.role == P2:
        return None
    with ctx.scope("reveal"):
        share = np.asarray(share, np.uint64)
        return ZL.add(share, ctx.exchange(ZL, share))


def _extern(ctx: ProtocolContext, op, args, attrs):
    if op == "MatMul":
        return matmul_3pc(ctx, args[0], args[1])
    if op == "Conv":
        return conv2d_3pc(ctx, args[0], args[1], attrs)
    if op == "MatAdd":
        return ZL.add(args[0], args[1])
    if op == "ScaleDown":
        return scaledown_3pc(ctx, args[0], attrs["scale"])
    if op == "ReLU":
        return relu(ctx, args[0])
    if op == "MaxPool":
        return maxpool_3pc(ctx, args[0], attrs)
    if op == "AvgPool":
        return avgpool_3pc(ctx, args[0], attrs, attrs["scale"])
    if op == "ArgMax":
        return argmax_3pc(ctx, args[0])
    if op == "FusedBatchNorm":
        return fused_batchnorm_3pc(ctx, args[0], args[1], args[2])
    raise IRError(f"no protocol for {op}")


def evaluate(ctx: ProtocolContext, program: LLILProgram, shared_weights: dict, x_share, free_after=None):
    """Run every statement on shares; buffers are released after their last use."""
    env = dict(shared_weights)
    env[program.input] = x_share
    batch = np.shape(x_share)[0]
    keep = set(program.params)
    for idx, c in enumerate(program.calls):
        args = [env[n] for n in c.inputs]
        with ctx.scope(c.op):
            if c.op in LIBRARY_OPS:
                val = kernels.library_op(c.op, args, c.attrs, batch)
            else:
                val = _extern(ctx, c.op, args, c.attrs)
        env[c.output] = val
        for name in (free_after or {}).get(idx, ()):
            if name not in keep and name != program.output:
                env.pop(name, None)
    return env[program.output]


def run_inference(
    ctx: ProtocolContext,
    program: LLILProgram,
    weights: dict | None = None,
    images=None,
    batch: int | None = None,
    chunk: int | None = None,
    open_output: bool = True,
):
    """Party-side driver: share inputs, evaluate, open the output.

    ``weights`` (uint64, P0 only) and ``images`` (uint64 at the model scale,
    P1 only).  ``batch`` must be given to every party.  Returns the opened
    output on P0/P1 and ``None`` on P2 (or raw shares if ``open_output`` is
    false).
    """
    if batch is None:
        raise ProtocolError("every party must know the batch size")
    chunk = chunk or batch
    free_after = liveness(program).free_after
    in_dims = program.dims(program.input)
    with ctx.scope("input"):
        shared = share_weights(ctx, program, weights)
    outs = []
    for lo in range(0, batch, chunk):
        n = min(chunk, batch - lo)
        shape = (n,) + tuple(in_dims[1:])
        with ctx.scope("input"):
            img = images[lo : lo + n] if ctx.role == P1 else None
            x = share_owned(ctx, P1, shape, img)
        y = evaluate(ctx, program, shared, x, free_after)
        outs.append(reveal(ctx, y) if open_output else y)
    if ctx.role == P2 and open_output:
        return None
    return np.concatenate(outs, axis=0)
