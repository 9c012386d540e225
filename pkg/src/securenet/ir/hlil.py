"""Typed call-sequence IRs.

Both levels share one representation: a list of declarations (name and
static dimensions) and an ordered list of calls ``output = op(inputs; attrs)``.
HLIL carries float tensors; LLIL carries 64-bit integer tensors at a single
global scale and only uses the crypto-facing extern ops plus share-local
library ops.

Activations are laid out NHWC with a leading batch dimension declared as 1.
Programs can be evaluated on any batch size; weights never carry a batch
dimension and rely on numpy broadcasting.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import prod
from typing import Iterable

EXTERN_OPS = frozenset(
    {"MatMul", "MatAdd", "Conv", "AvgPool", "MaxPool", "ArgMax", "FusedBatchNorm", "ReLU", "ScaleDown"}
)
LIBRARY_OPS = frozenset({"Reshape", "Flatten", "Pad", "Transpose", "Concat", "Squeeze", "BroadcastTo"})
# ops whose product lands at twice the scale and needs one ScaleDown afterwards
PRODUCT_OPS = frozenset({"MatMul", "Conv", "FusedBatchNorm"})

OP_ALIASES = {"Conv2D": "Conv", "Relu": "ReLU", "Add": "MatAdd", "BiasAdd": "MatAdd"}


class IRError(ValueError):
    pass


class ShapeError(IRError):
    pass


@dataclass(frozen=True)
class Call:
    op: str
    inputs: tuple
    output: str
    attrs: dict = field(default_factory=dict, compare=True, hash=False)

    def __str__(self):
        args = ", ".join(self.inputs)
        extra = ", ".join(f"{k}={v}" for k, v in sorted(self.attrs.items()))
        sep = "; " if extra and args else ""
        return f"{self.output} = {self.op}({args}{sep}{extra})"


@dataclass
class Program:
    """Declarations plus calls. ``params`` are the model weights."""

    decls: dict
    calls: list
    input: str | None
    output: str | None
    params: tuple = ()

    level = "abstract"

    def dims(self, name: str) -> tuple:
        try:
            return self.decls[name]
        except KeyError:
            raise IRError(f"undeclared tensor {name!r}") from None

    def size(self, name: str) -> int:
        return prod(self.dims(name))

    def uses(self) -> dict:
        out: dict = {}
        for idx, c in enumerate(self.calls):
            for n in c.inputs:
                out.setdefault(n, []).append(idx)
        return out

    def producers(self) -> dict:
        return {c.output: idx for idx, c in enumerate(self.calls)}

    def count_ops(self, op: str) -> int:
        return sum(1 for c in self.calls if c.op == op)

    def elements_through(self, op: str) -> int:
        """Total output elements of all calls to ``op`` (batch of one)."""
        return sum(self.size(c.output) for c in self.calls if c.op == op)

    def render(self) -> str:
        lines = [f"{n}: {self.elem_type}{list(d)}" for n, d in self.decls.items()]
        lines += [str(c) for c in self.calls]
        return "\n".join(lines)

    elem_type = "?"

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "decls": [{"name": n, "dims": list(d)} for n, d in self.decls.items()],
            "calls": [
                {"op": c.op, "inputs": list(c.inputs), "output": c.output, "attrs": _jsonable(c.attrs)}
                for c in self.calls
            ],
            "input": self.input,
            "output": self.output,
            "params": list(self.params),
            **self._extra_json(),
        }

    def _extra_json(self) -> dict:
        return {}


@dataclass
class HLILProgram(Program):
    level = "hlil"
    elem_type = "float"


@dataclass
class LLILProgram(Program):
    scale: int = 0

    level = "llil"
    elem_type = "int"

    def _extra_json(self):
        return {"scale": self.scale}


def program_from_json(obj: dict) -> Program:
    decls = {d["name"]: tuple(d["dims"]) for d in obj["decls"]}
    calls = [Call(c["op"], tuple(c["inputs"]), c["output"], dict(c.get("attrs", {}))) for c in obj["calls"]]
    kw = dict(decls=decls, calls=calls, input=obj["input"], output=obj["output"], params=tuple(obj["params"]))
    if obj.get("level") == "llil":
        return LLILProgram(scale=int(obj["scale"]), **kw)
    return HLILProgram(**kw)


def _jsonable(attrs: dict) -> dict:
    out = {}
    for k, v in attrs.items():
        if isinstance(v, tuple):
            v = [list(x) if isinstance(x, tuple) else x for x in v]
        out[k] = v
    return out


# --------------------------------------------------------------------------
# shape rules


def conv_padding(in_dim: int, f: int, stride: int, padding: str) -> tuple[int, int]:
    """(before, after) padding for one spatial axis, TensorFlow conventions."""
    if padding == "VALID":
        return 0, 0
    if padding != "SAME":
        raise ShapeError(f"unknown padding {padding!r}")
    out = -(-in_dim // stride)
    total = max((out - 1) * stride + f - in_dim, 0)
    return total // 2, total - total // 2


def conv_out_dim(in_dim: int, f: int, stride: int, padding: str) -> int:
    lo, hi = conv_padding(in_dim, f, stride, padding)
    span = in_dim + lo + hi - f
    if span < 0:
        raise ShapeError(f"filter {f} larger than padded input {in_dim + lo + hi}")
    return span // stride + 1


def pool_attrs(attrs: dict) -> tuple[tuple[int, int], tuple[int, int]]:
    pool = tuple(attrs.get("pool", (2, 2)))
    strides = tuple(attrs.get("strides", pool))
    if len(pool) != 2 or len(strides) != 2 or min(pool) < 1 or min(strides) < 1:
        raise ShapeError(f"bad pool attributes {attrs}")
    return pool, strides


def infer_shape(op: str, shapes: list[tuple], attrs: dict) -> tuple:
    """Output dims of ``op`` applied to operands of the given dims."""

    def need(n):
        if len(shapes) != n:
            raise ShapeError(f"{op} takes {n} operands, got {len(shapes)}")

    if op == "MatMul":
        need(2)
        a, b = shapes
        if len(a) != 2 or len(b) != 2 or a[1] != b[0]:
            raise ShapeError(f"MatMul shapes {a} x {b} do not chain")
        return (a[0], b[1])
    if op == "MatAdd":
        need(2)
        if shapes[0] != shapes[1]:
            raise ShapeError(f"MatAdd operands differ: {shapes[0]} vs {shapes[1]}")
        return shapes[0]
    if op == "Conv":
        need(2)
        x, w = shapes
        if len(x) != 4 or len(w) != 4:
            raise ShapeError("Conv expects NHWC input and HWIO filter")
        if x[3] != w[2]:
            raise ShapeError(f"Conv channel mismatch: input {x[3]}, filter {w[2]}")
        sh, sw = tuple(attrs.get("strides", (1, 1)))
        pad = attrs.get("padding", "VALID")
        return (x[0], conv_out_dim(x[1], w[0], sh, pad), conv_out_dim(x[2], w[1], sw, pad), w[3])
    if op in ("MaxPool", "AvgPool"):
        need(1)
        (x,) = shapes
        if len(x) != 4:
            raise ShapeError(f"{op} expects NHWC input")
        (a, b), (sa, sb) = pool_attrs(attrs)
        if x[1] < a or x[2] < b:
            raise ShapeError(f"{op} window {a}x{b} larger than input {x[1]}x{x[2]}")
        return (x[0], (x[1] - a) // sa + 1, (x[2] - b) // sb + 1, x[3])
    if op == "ReLU":
        need(1)
        return shapes[0]
    if op == "ScaleDown":
        need(1)
        return shapes[0]
    if op == "ArgMax":
        need(1)
        if len(shapes[0]) < 1:
            raise ShapeError("ArgMax needs at least one axis")
        return shapes[0][:-1]
    if op == "FusedBatchNorm":
        x = shapes[0]
        c = x[-1]
        if len(shapes) not in (3, 5):
            raise ShapeError("FusedBatchNorm takes (x, B, C) or (x, gamma, beta, mean, var)")
        for s in shapes[1:]:
            if s != (c,):
                raise ShapeError(f"FusedBatchNorm parameter dims {s} do not match channels {c}")
        return x
    if op == "Reshape":
        need(1)
        target = tuple(attrs["shape"])
        if prod(target) != prod(shapes[0]):
            raise ShapeError(f"cannot reshape {shapes[0]} to {target}")
        return target
    if op == "Flatten":
        need(1)
        x = shapes[0]
        return (x[0], prod(x[1:]))
    if op == "Pad":
        need(1)
        pads = [tuple(p) for p in attrs["pads"]]
        if len(pads) != len(shapes[0]):
            raise ShapeError("Pad needs one (before, after) pair per axis")
        return tuple(d + lo + hi for d, (lo, hi) in zip(shapes[0], pads))
    if op == "Transpose":
        need(1)
        perm = tuple(attrs["perm"])
        if sorted(perm) != list(range(len(shapes[0]))):
            raise ShapeError(f"bad permutation {perm}")
        return tuple(shapes[0][i] for i in perm)
    if op == "Concat":
        axis = attrs.get("axis", -1)
        base = list(shapes[0])
        ax = axis % len(base)
        for s in shapes[1:]:
            if len(s) != len(base) or any(a != b for i, (a, b) in enumerate(zip(s, base)) if i != ax):
                raise ShapeError(f"Concat operands {shapes} disagree off axis {axis}")
        base[ax] = sum(s[ax] for s in shapes)
        return tuple(base)
    if op == "Squeeze":
        need(1)
        axes = attrs.get("axes")
        x = shapes[0]
        if axes is None:
            return tuple(d for d in x if d != 1)
        axes = {a % len(x) for a in axes}
        if any(x[a] != 1 for a in axes):
            raise ShapeError(f"cannot squeeze non-unit axes of {x}")
        return tuple(d for i, d in enumerate(x) if i not in axes)
    if op == "BroadcastTo":
        need(1)
        target = tuple(attrs["shape"])
        src = shapes[0]
        if len(src) > len(target) or any(
            s not in (1, t) for s, t in zip(reversed(src), reversed(target))
        ):
            raise ShapeError(f"cannot broadcast {src} to {target}")
        return target
    raise IRError(f"unknown op {op!r}")


def check_program(p: Program) -> None:
    """Type-check every call: operands defined earlier, dims consistent."""
    allowed = EXTERN_OPS | LIBRARY_OPS
    defined = set(p.params)
    if p.input is not None:
        defined.add(p.input)
    for c in p.calls:
        if c.op not in allowed:
            raise IRError(f"unknown op {c.op!r}")
        if isinstance(p, HLILProgram) and c.op == "ScaleDown":
            raise IRError("ScaleDown only exists after lowering")
        for n in c.inputs:
            if n not in defined:
                raise IRError(f"{c.op} uses {n!r} before it is defined")
        if c.output in defined:
            raise IRError(f"{c.output!r} assigned twice")
        got = infer_shape(c.op, [p.dims(n) for n in c.inputs], c.attrs)
        if p.decls.get(c.output, got) != got:
            raise ShapeError(f"{c.output} declared {p.decls[c.output]} but {c.op} yields {got}")
        defined.add(c.output)
    if p.output is not None and p.output not in defined:
        raise IRError(f"program output {p.output!r} is never produced")


def build(cls, decls: dict, calls: Iterable[Call], input, output, params) -> Program:
    """Construct a program, inferring any undeclared call outputs."""
    decls = {k: tuple(v) for k, v in decls.items()}
    calls = list(calls)
    for c in calls:
        if c.output not in decls:
            missing = [n for n in c.inputs if n not in decls]
            if missing:
                raise IRError(f"{c.op} reads undefined tensor {missing[0]!r}")
            decls[c.output] = infer_shape(c.op, [decls[n] for n in c.inputs], c.attrs)
    prog = cls(decls=decls, calls=calls, input=input, output=output, params=tuple(params))
    check_program(prog)
    return prog


def with_calls(p: Program, calls: list, decls: dict | None = None, **kw) -> Program:
    return replace(p, calls=list(calls), decls=dict(p.decls if decls is None else decls), **kw)
