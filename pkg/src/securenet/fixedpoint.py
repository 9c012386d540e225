"""Float-to-fixed conversion, plaintext interpreters and scale selection.

A real ``r`` at scale ``s`` becomes ``floor(float32(r) * 2**s)`` stored in
Z_{2^64} (two's complement).  The fixed interpreter evaluates LLIL on these
words with exact wraparound; it is the oracle the 3PC executor must match.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .ir.hlil import EXTERN_OPS, LIBRARY_OPS, IRError, LLILProgram, Program
from .ir.lower import BackendCallTrace, FixedConfig, lower
from .ir.modelio import FloatModel

TWO63 = 2.0**63


class FixedOverflow(ArithmeticError):
    pass


def rho(r, s: int, on_overflow: str = "raise"):
    """floor(float32(r) * 2^s) as Z_{2^64} words.

    ``on_overflow`` is ``"raise"`` (default) or ``"wrap"``; wrapped values are
    reduced mod 2^64 and carry no meaning, they only let a scale sweep go on.
    """
    r32 = np.asarray(r, dtype=np.float32)
    if not np.all(np.isfinite(r32)):
        raise ValueError("cannot quantize a non-finite value")
    v = np.floor(r32.astype(np.float64) * np.ldexp(1.0, s))
    over = (v >= TWO63) | (v < -TWO63)
    if over.any():
        if on_overflow == "raise":
            raise FixedOverflow(f"{int(over.sum())} value(s) exceed 64 bits at scale {s}")
        out = np.empty(v.shape, dtype=np.uint64)
        flat_v, flat_o, flat_out = v.reshape(-1), over.reshape(-1), out.reshape(-1)
        ok = ~flat_o
        flat_out[ok] = flat_v[ok].astype(np.int64).view(np.uint64)
        flat_out[flat_o] = [int(x) % (1 << 64) for x in flat_v[flat_o]]
    else:
        out = v.astype(np.int64).view(np.uint64)
    return out[()] if out.ndim == 0 else out


def overflows(r, s: int) -> bool:
    v = np.floor(np.asarray(r, dtype=np.float32).astype(np.float64) * np.ldexp(1.0, s))
    return bool(np.any((v >= TWO63) | (v < -TWO63)))


def to_real(words, s: int) -> np.ndarray:
    return np.asarray(words, np.uint64).view(np.int64).astype(np.float64) / np.ldexp(1.0, s)


@dataclass
class FixedModel:
    program: LLILProgram
    weights: dict  # name -> uint64 ndarray
    config: FixedConfig
    trace: BackendCallTrace | None = None
    overflow: list = field(default_factory=list)

    @property
    def scale(self) -> int:
        return self.config.scale


def fold_batchnorm(gamma, beta, mean, var, eps: float, s: int, on_overflow="raise"):
    """Per-channel multiplier at scale s and offset at scale 2s."""
    gamma, beta, mean, var = (np.asarray(a, np.float32) for a in (gamma, beta, mean, var))
    inv = gamma / np.sqrt(var + np.float32(eps))
    return rho(inv, s, on_overflow), rho(beta - mean * inv, 2 * s, on_overflow)


def quantize_model(m: FloatModel, s: int, on_overflow: str = "wrap") -> FixedModel:
    """Lower the graph and map every weight through ``rho``."""
    cfg = FixedConfig(s)
    prog, trace = lower(m.program, cfg)
    weights = {}
    over = []
    for c in prog.calls:
        if c.op != "FusedBatchNorm":
            continue
        names = c.attrs["fold"]
        vals = [m.weights[n] for n in names]
        b_name, c_name = c.inputs[1], c.inputs[2]
        try:
            weights[b_name], weights[c_name] = fold_batchnorm(*vals, c.attrs["epsilon"], s)
        except FixedOverflow:
            if on_overflow == "raise":
                raise
            over += [b_name, c_name]
            weights[b_name], weights[c_name] = fold_batchnorm(*vals, c.attrs["epsilon"], s, "wrap")
    for name in prog.params:
        if name in weights:
            continue
        w = m.weights[name]
        if overflows(w, s):
            over.append(name)
            if on_overflow == "raise":
                raise FixedOverflow(f"weight {name!r} overflows at scale {s}")
        weights[name] = rho(w, s, "wrap")
    return FixedModel(prog, weights, cfg, trace, over)


def quantize_input(x, s: int, on_overflow: str = "wrap") -> np.ndarray:
    return np.asarray(rho(x, s, on_overflow), dtype=np.uint64)


# --------------------------------------------------------------------------
# interpreters


def _signed(a):
    return np.asarray(a, np.uint64).view(np.int64)


def _fixed_extern(op, args, attrs, scale):
    if op == "MatMul":
        return np.matmul(args[0], args[1])
    if op == "MatAdd":
        return np.add(args[0], args[1], dtype=np.uint64)
    if op == "Conv":
        x, w = args
        return np.matmul(kernels.conv_operands(x, w.shape, attrs), kernels.filter_matrix(w))
    if op == "ScaleDown":
        return (_signed(args[0]) >> np.int64(attrs["scale"])).view(np.uint64)
    if op == "ReLU":
        return np.where(_signed(args[0]) > 0, args[0], np.uint64(0))
    if op == "MaxPool":
        return kernels.pool_windows(_signed(args[0]), attrs).max(axis=-1).view(np.uint64)
    if op == "AvgPool":
        win = kernels.pool_windows(args[0], attrs)
        s = attrs["scale"]
        total = np.sum(win, axis=-1, dtype=np.uint64)
        scaled = total * rho(1.0 / win.shape[-1], s)
        return (_signed(scaled) >> np.int64(s)).view(np.uint64)
    if op == "ArgMax":
        return np.argmax(_signed(args[0]), axis=-1).astype(np.uint64)
    if op == "FusedBatchNorm":
        return np.add(np.multiply(args[0], args[1], dtype=np.uint64), args[2], dtype=np.uint64)
    raise IRError(f"no fixed-point semantics for {op}")


def _float_extern(op, args, attrs, _scale):
    if op == "MatMul":
        return np.matmul(args[0], args[1])
    if op == "MatAdd":
        return args[0] + args[1]
    if op == "Conv":
        x, w = args
        return np.matmul(kernels.conv_operands(x, w.shape, attrs), kernels.filter_matrix(w))
    if op == "ReLU":
        return np.maximum(args[0], np.float32(0))
    if op == "MaxPool":
        return kernels.pool_windows(args[0], attrs).max(axis=-1)
    if op == "AvgPool":
        return kernels.pool_windows(args[0], attrs).mean(axis=-1, dtype=np.float32)
    if op == "ArgMax":
        return np.argmax(args[0], axis=-1)
    if op == "FusedBatchNorm":
        x, gamma, beta, mean, var = args
        return gamma * (x - mean) / np.sqrt(var + np.float32(attrs.get("epsilon", 1e-3))) + beta
    raise IRError(f"no float semantics for {op}")


def _evaluate(p: Program, weights: dict, x, extern, scale, record=None):
    env = dict(weights)
    env[p.input] = x
    batch = x.shape[0] if x.ndim else 1
    for c in p.calls:
        args = [env[n] for n in c.inputs]
        if c.op in LIBRARY_OPS:
            val = kernels.library_op(c.op, args, c.attrs, batch)
        elif c.op in EXTERN_OPS:
            val = extern(c.op, args, c.attrs, scale)
        else:
            raise IRError(f"unknown op {c.op}")
        env[c.output] = val
        if record is not None:
            record(c, val)
    return env[p.output]


def fixed_interpret(m: FixedModel, x, record=None) -> np.ndarray:
    """Evaluate the LLIL on Z_{2^64} words; ``x`` is already at the model scale."""
    x = np.asarray(x, dtype=np.uint64)
    return _evaluate(m.program, m.weights, x, _fixed_extern, m.scale, record)


def float_interpret(m: FloatModel, x, record=None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    return _evaluate(m.program, m.weights, x, _float_extern, None, record)


def predictions(output) -> np.ndarray:
    """Class labels from a program output (ArgMax indices or logits)."""
    out = np.asarray(output)
    if out.dtype == np.uint64 and out.ndim >= 2:
        return np.argmax(_signed(out), axis=-1)
    if out.ndim >= 2:
        return np.argmax(out, axis=-1)
    return out.astype(np.int64)


@dataclass
class SweepResult:
    best_scale: int
    table: dict  # scale -> accuracy

    @property
    def best_accuracy(self) -> float:
        return self.table[self.best_scale]


def fixed_accuracy(fm: FixedModel, images, labels, batch: int = 500) -> float:
    labels = np.asarray(labels)
    hits = 0
    for lo in range(0, len(labels), batch):
        xq = quantize_input(images[lo : lo + batch], fm.scale)
        hits += int(np.sum(predictions(fixed_interpret(fm, xq)) == labels[lo : lo + batch]))
    return hits / len(labels)


def float_accuracy(m: FloatModel, images, labels) -> float:
    return float(np.mean(predictions(float_interpret(m, images)) == np.asarray(labels)))


def scale_sweep(m: FloatModel, images, labels, scales=range(64)) -> SweepResult:
    """Accuracy at every scale; the best one wins, smallest scale on ties."""
    if len(labels) == 0:
        raise ValueError("validation set is empty")
    table = {}
    for s in scales:
        table[s] = fixed_accuracy(quantize_model(m, s), images, labels)
    best = max(table, key=lambda s: (table[s], -s))
    return SweepResult(best, table)


__all__ = [
    "FixedConfig",
    "FixedModel",
    "FixedOverflow",
    "SweepResult",
    "fixed_accuracy",
    "fixed_interpret",
    "float_accuracy",
    "float_interpret",
    "fold_batchnorm",
    "predictions",
    "quantize_input",
    "quantize_model",
    "rho",
    "scale_sweep",
    "to_real",
]
