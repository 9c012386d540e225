from .analysis import Liveness, count_scaledown, liveness
from .hlil import (
    EXTERN_OPS,
    LIBRARY_OPS,
    Call,
    HLILProgram,
    IRError,
    LLILProgram,
    Program,
    ShapeError,
    program_from_json,
)
from .lower import BackendCallTrace, FixedConfig, TraceEntry, lower
from .modelio import FloatModel, load_model, model_from_parts, save_model
from .passes import relu_maxpool_switch

__all__ = [
    "EXTERN_OPS",
    "LIBRARY_OPS",
    "BackendCallTrace",
    "Call",
    "FixedConfig",
    "FloatModel",
    "HLILProgram",
    "IRError",
    "LLILProgram",
    "Liveness",
    "Program",
    "ShapeError",
    "TraceEntry",
    "count_scaledown",
    "liveness",
    "load_model",
    "lower",
    "model_from_parts",
    "program_from_json",
    "relu_maxpool_switch",
    "save_model",
]
