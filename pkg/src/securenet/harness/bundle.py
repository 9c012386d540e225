"""Compiled bundles and input loading.

A bundle is a directory holding ``bundle.json`` (LLIL program, backend call
trace, scale, accuracy table) and ``weights.u64`` (fixed-point weights in
the same container format as float weights, with 8-byte words).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..fixedpoint import FixedModel, fixed_accuracy, quantize_input, quantize_model, scale_sweep
from ..ir.hlil import IRError, LLILProgram, program_from_json
from ..ir.lower import BackendCallTrace, FixedConfig, TraceEntry
from ..ir.modelio import FloatModel, decode_weights, encode_weights, load_model
from ..ir.passes import relu_maxpool_switch

BUNDLE_FILE = "bundle.json"
WEIGHTS_FILE = "weights.u64"
BUNDLE_VERSION = 1


class BundleError(ValueError):
    pass


@dataclass
class Bundle:
    model: FixedModel
    accuracy: dict = field(default_factory=dict)  # scale -> validation accuracy
    switched: bool = False

    @property
    def program(self) -> LLILProgram:
        return self.model.program

    @property
    def scale(self) -> int:
        return self.model.scale


def compile_bundle(graph_path, weights_path, scale: int | None = None, sweep: bool = False,
                   validation=None, switch: bool = True, scales=range(64)) -> Bundle:
    """Load a float model and lower it at a fixed or swept scale.

    ``validation`` is ``(images, labels)`` in float; it is required for a
    sweep and optional otherwise (then the table has one entry).
    """
    if (scale is None) == (not sweep):
        raise BundleError("give exactly one of a scale or a sweep")
    prog, fm = load_model(graph_path, weights_path)
    if switch:
        fm = FloatModel(relu_maxpool_switch(prog), fm.weights)
    table: dict = {}
    if sweep:
        if validation is None:
            raise BundleError("a scale sweep needs validation data")
        result = scale_sweep(fm, validation[0], validation[1], scales)
        scale, table = result.best_scale, result.table
    fixed = quantize_model(fm, scale)
    if validation is not None and not table:
        table = {scale: fixed_accuracy(fixed, validation[0], validation[1])}
    return Bundle(fixed, table, switch)


def save_bundle(bundle: Bundle, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": BUNDLE_VERSION,
        "scale": bundle.scale,
        "switched": bundle.switched,
        "accuracy": {str(k): v for k, v in sorted(bundle.accuracy.items())},
        "overflow": list(bundle.model.overflow),
        "program": bundle.program.to_json(),
        "trace": bundle.model.trace.to_json() if bundle.model.trace is not None else None,
    }
    (d / BUNDLE_FILE).write_text(json.dumps(meta, indent=1))
    (d / WEIGHTS_FILE).write_bytes(encode_weights(bundle.model.weights, dtype="<u8"))
    return d


def load_bundle(directory) -> Bundle:
    d = Path(directory)
    try:
        meta = json.loads((d / BUNDLE_FILE).read_text())
    except FileNotFoundError:
        raise BundleError(f"{d} has no {BUNDLE_FILE}") from None
    except json.JSONDecodeError as exc:
        raise BundleError(f"{d / BUNDLE_FILE}: {exc}") from None
    if meta.get("version") != BUNDLE_VERSION:
        raise BundleError(f"unsupported bundle version {meta.get('version')}")
    prog = program_from_json(meta["program"])
    if not isinstance(prog, LLILProgram):
        raise BundleError("bundle program is not LLIL")
    weights = decode_weights((d / WEIGHTS_FILE).read_bytes(), dtype="<u8")
    missing = set(prog.params) - set(weights)
    if missing:
        raise BundleError(f"bundle weights lack {sorted(missing)}")
    trace = None
    if meta.get("trace") is not None:
        trace = BackendCallTrace(
            [TraceEntry(e["op"], tuple(e["operands"]), e["output"], e["params"]) for e in meta["trace"]]
        )
    model = FixedModel(prog, weights, FixedConfig(int(meta["scale"])), trace, list(meta.get("overflow", [])))
    table = {int(k): v for k, v in meta.get("accuracy", {}).items()}
    return Bundle(model, table, bool(meta.get("switched")))


def load_float_inputs(path, input_dims) -> tuple[np.ndarray, np.ndarray | None]:
    """Float images (and labels if present) from ``.npz`` or raw float32."""
    path = Path(path)
    tail = tuple(input_dims[1:])
    if path.suffix == ".npz":
        with np.load(path) as data:
            images = np.asarray(data["images"], np.float32)
            labels = np.asarray(data["labels"]) if "labels" in data else None
    else:
        raw = np.fromfile(path, dtype="<f4")
        per = int(np.prod(tail))
        if raw.size % per:
            raise IRError(f"{path}: {raw.size} floats is not a whole number of {tail} images")
        images, labels = raw.reshape((-1,) + tail), None
    if images.shape[1:] != tail:
        images = images.reshape((-1,) + tail)
    return images, labels


def load_inputs(path, bundle: Bundle) -> tuple[np.ndarray, np.ndarray | None]:
    """Images quantized at the bundle's scale, plus labels when the file has them."""
    images, labels = load_float_inputs(path, bundle.program.dims(bundle.program.input))
    return quantize_input(images, bundle.scale), labels
