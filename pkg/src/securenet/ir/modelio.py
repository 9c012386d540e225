"""Native model files: a JSON graph plus a binary float32 weights file.

Graph::

    {"tensors": [{"name": "W", "dims": [784, 10]}, ...],
     "nodes":   [{"op": "MatMul", "inputs": ["x", "W"], "output": "xW",
                  "attrs": {"strides": [1, 1], "padding": "VALID", "pool": [2, 2]}}],
     "input": "x", "output": "y"}

Weights: repeated records of ``u32 name length, name bytes, u32 rank,
u32 dims[rank], float32 payload`` (all little-endian, row-major).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .hlil import OP_ALIASES, Call, HLILProgram, IRError, ShapeError, build, infer_shape


@dataclass
class FloatModel:
    program: HLILProgram
    weights: dict  # name -> float32 ndarray

    def __post_init__(self):
        for name in self.program.params:
            if name not in self.weights:
                raise IRError(f"weight {name!r} has no data")
            if tuple(self.weights[name].shape) != self.program.dims(name):
                raise ShapeError(
                    f"weight {name!r} has dims {self.weights[name].shape}, graph says {self.program.dims(name)}"
                )


def write_weights(path, weights: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_weights(weights))


def encode_weights(weights: dict, dtype="<f4") -> bytes:
    out = bytearray()
    for name, arr in weights.items():
        arr = np.ascontiguousarray(arr, dtype=dtype)
        raw = name.encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
        out += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    return bytes(out)


def decode_weights(data: bytes, dtype="<f4") -> dict:
    width = np.dtype(dtype).itemsize
    out = {}
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise IRError("weights file truncated")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    while pos < len(data):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(dims, dtype=np.int64))
        arr = np.frombuffer(take(width * count), dtype=dtype).reshape(dims)
        if name in out:
            raise IRError(f"weight {name!r} appears twice")
        out[name] = arr.astype(np.dtype(dtype).newbyteorder("="))
    return out


def read_weights(path) -> dict:
    return decode_weights(Path(path).read_bytes())


def graph_from_json(obj: dict, weight_names) -> tuple[HLILProgram, dict]:
    """Parse a graph dict; returns the program and a bias-expansion map.

    A rank-1 operand of MatAdd whose length matches the other operand's last
    axis is a bias.  It is expanded here, once, to the full activation dims
    so the program only ever adds equal-shaped tensors.  The returned map
    ``{bias name: target dims}`` tells the loader how to materialize it.
    """
    if not obj.get("nodes") and not obj.get("tensors"):
        return HLILProgram(decls={}, calls=[], input=obj.get("input"), output=obj.get("output")), {}
    decls = {}
    for t in obj.get("tensors", []):
        dims = tuple(int(d) for d in t["dims"])
        if t["name"] in decls:
            raise IRError(f"tensor {t['name']!r} declared twice")
        if any(d < 1 for d in dims):
            raise ShapeError(f"tensor {t['name']!r} has a non-positive dimension")
        decls[t["name"]] = dims
    inp = obj.get("input")
    if inp is not None and inp not in decls:
        raise IRError(f"input {inp!r} is not declared")
    weight_names = set(weight_names)
    params = [n for n in decls if n != inp and n in weight_names]
    dangling = [n for n in decls if n != inp and n not in weight_names and _is_leaf(n, obj)]
    if dangling:
        raise IRError(f"tensors with neither producer nor weights: {dangling}")

    calls = []
    expand = {}
    known = dict(decls)
    for node in obj.get("nodes", []):
        op = OP_ALIASES.get(node["op"], node["op"])
        ins = tuple(node["inputs"])
        attrs = dict(node.get("attrs", {}))
        for k in ("strides", "pool", "perm", "shape", "axes"):
            if k in attrs and attrs[k] is not None:
                attrs[k] = tuple(attrs[k])
        if "pads" in attrs:
            attrs["pads"] = tuple(tuple(p) for p in attrs["pads"])
        for n in ins:
            if n not in known:
                raise IRError(f"node {node['output']!r} reads undefined tensor {n!r}")
        if op == "MatAdd":
            a, b = (known[n] for n in ins)
            if a != b and len(b) == 1 and ins[1] in weight_names and a[-1] == b[0]:
                target = a
                prev = expand.get(ins[1])
                if prev is not None and prev != target:
                    raise ShapeError(f"bias {ins[1]!r} broadcast to two different shapes")
                expand[ins[1]] = target
                known[ins[1]] = target
        out_dims = infer_shape(op, [known[n] for n in ins], attrs)
        if node["output"] in known and node["output"] in decls and decls[node["output"]] != out_dims:
            raise ShapeError(f"{node['output']} declared {decls[node['output']]} but {op} yields {out_dims}")
        known[node["output"]] = out_dims
        calls.append(Call(op, ins, node["output"], attrs))
    for name, dims in expand.items():
        decls[name] = dims
    prog = build(HLILProgram, decls, calls, inp, obj.get("output"), params)
    return prog, expand


def _is_leaf(name, obj) -> bool:
    return all(n["output"] != name for n in obj.get("nodes", []))


def load_model(graph_path, weights_path) -> tuple[HLILProgram, FloatModel]:
    obj = json.loads(Path(graph_path).read_text(encoding="utf-8"))
    weights = read_weights(weights_path)
    return model_from_parts(obj, weights)


def model_from_parts(graph: dict, weights: dict) -> tuple[HLILProgram, FloatModel]:
    weights = {k: np.asarray(v, dtype=np.float32) for k, v in weights.items()}
    prog, expand = graph_from_json(graph, weights)
    for name, dims in expand.items():
        weights[name] = np.ascontiguousarray(np.broadcast_to(weights[name], dims))
    used = {k: v for k, v in weights.items() if k in prog.params}
    return prog, FloatModel(prog, used)


def save_model(graph: dict, weights: dict, graph_path, weights_path) -> None:
    Path(graph_path).write_text(json.dumps(graph, indent=1), encoding="utf-8")
    write_weights(weights_path, weights)
