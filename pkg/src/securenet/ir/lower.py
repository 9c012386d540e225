"""HLIL -> LLIL lowering and the backend call trace."""

from __future__ import annotations

from dataclasses import dataclass, field

from .hlil import (
    EXTERN_OPS,
    LIBRARY_OPS,
    PRODUCT_OPS,
    Call,
    HLILProgram,
    IRError,
    LLILProgram,
    check_program,
)

BITS = 64


@dataclass(frozen=True)
class FixedConfig:
    scale: int
    bits: int = BITS

    def __post_init__(self):
        if self.bits != BITS:
            raise ValueError("only 64-bit fixed point is supported")
        if not 0 <= self.scale < self.bits:
            raise ValueError(f"scale must lie in [0, {self.bits - 1}], got {self.scale}")


@dataclass(frozen=True)
class TraceEntry:
    op: str
    operands: tuple
    output: str
    params: dict = field(default_factory=dict, hash=False)

    @property
    def kind(self) -> str:
        return "extern" if self.op in EXTERN_OPS else "library"


@dataclass
class BackendCallTrace:
    entries: list

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def externs(self) -> list:
        return [e for e in self.entries if e.kind == "extern"]

    def to_json(self) -> list:
        return [{"op": e.op, "operands": list(e.operands), "output": e.output, "params": e.params} for e in self]


def _fresh(name: str, taken) -> str:
    cand = name
    k = 1
    while cand in taken:
        cand = f"{name}{k}"
        k += 1
    return cand


def lower(p: HLILProgram, cfg: FixedConfig) -> tuple[LLILProgram, BackendCallTrace]:
    """Apply the float-to-fixed transform and emit integer extern calls.

    * MatMul, Conv and FusedBatchNorm are each followed by one
      ``ScaleDown(out, s)`` writing a fresh SSA name; later uses are renamed.
    * MatAdd, ReLU, pools and ArgMax are unchanged (operands already share scale s).
    * FusedBatchNorm's four statistics collapse into a per-channel multiplier
      ``B`` (scale s) and offset ``C`` (scale 2s); the call keeps the original
      names under ``fold`` so the quantizer can compute them.
    * AvgPool gets the scale as a parameter because it truncates internally.
    """
    s = cfg.scale
    decls = dict(p.decls)
    params = list(p.params)
    rename: dict = {}
    calls = []
    folded = set()
    for c in p.calls:
        if c.op not in EXTERN_OPS | LIBRARY_OPS or c.op == "ScaleDown":
            raise IRError(f"cannot lower {c.op}")
        ins = tuple(rename.get(n, n) for n in c.inputs)
        attrs = dict(c.attrs)
        if c.op == "FusedBatchNorm":
            if len(ins) != 5:
                raise IRError("HLIL FusedBatchNorm takes (x, gamma, beta, mean, var)")
            b_name = _fresh(f"{c.output}_B", decls)
            decls[b_name] = decls[c.inputs[1]]
            c_name = _fresh(f"{c.output}_C", decls)
            decls[c_name] = decls[c.inputs[1]]
            params += [b_name, c_name]
            attrs = {"epsilon": float(attrs.get("epsilon", 1e-3)), "fold": tuple(c.inputs[1:])}
            folded.update(c.inputs[1:])
            ins = (ins[0], b_name, c_name)
        if c.op == "AvgPool":
            attrs["scale"] = s
        calls.append(Call(c.op, ins, c.output, attrs))
        if c.op in PRODUCT_OPS:
            sd = _fresh(f"{c.output}_sd", decls)
            decls[sd] = decls[c.output]
            calls.append(Call("ScaleDown", (c.output,), sd, {"scale": s}))
            rename[c.output] = sd

    still_used = {n for c in calls for n in c.inputs}
    for name in folded:
        if name not in still_used:
            params.remove(name)
            del decls[name]
    out = rename.get(p.output, p.output)
    prog = LLILProgram(decls=decls, calls=calls, input=p.input, output=out, params=tuple(params), scale=s)
    check_program(prog)
    trace = BackendCallTrace([TraceEntry(c.op, c.inputs, c.output, dict(c.attrs)) for c in calls])
    return prog, trace
