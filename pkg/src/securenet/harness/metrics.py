"""Metrics reports for runs and benchmarks."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field

from ..ir.analysis import liveness


@dataclass
class MetricsReport:
    phase_ms: dict = field(default_factory=dict)
    bytes: dict = field(default_factory=dict)  # channel -> {payload, frames}
    protocols: dict = field(default_factory=dict)  # scope path -> payload bytes
    ops: dict = field(default_factory=lambda: {"relu": 0, "comparisons": 0, "scaledown_elems": 0})
    residuals: dict = field(default_factory=dict)
    peak_working_set: int | None = None
    outputs: list | None = None
    labels: list | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_contexts(cls, contexts, program=None, phase_ms=None) -> "MetricsReport":
        rep = cls(phase_ms=dict(phase_ms or {}))
        scopes: dict = defaultdict(int)
        for ctx in contexts:
            if ctx is None:
                continue
            m = ctx.meters
            for chan, n in m.payload.items():
                rep.bytes[chan] = {"payload": n, "frames": m.frames[chan]}
            for scope, n in m.scopes.items():
                scopes[scope] += n
            for name in rep.ops:
                # every party runs the same protocol code, so counts agree
                rep.ops[name] = max(rep.ops[name], m.counters.get(name, 0))
        rep.protocols = dict(sorted(scopes.items()))
        if program is not None:
            rep.peak_working_set = liveness(program).peak_bytes
        return rep

    def channel_total(self) -> int:
        return sum(v["payload"] for v in self.bytes.values())

    def protocol_total(self) -> int:
        return sum(self.protocols.values())

    def by_top_scope(self) -> dict:
        out: dict = defaultdict(int)
        for scope, n in self.protocols.items():
            out[scope.split("/")[0]] += n
        return dict(out)

    def conserved(self) -> bool:
        return self.channel_total() == self.protocol_total()

    def to_dict(self) -> dict:
        d = {
            "phase_ms": self.phase_ms,
            "bytes": self.bytes,
            "protocols": self.protocols,
            "ops": self.ops,
            "residuals": self.residuals,
            "peak_working_set": self.peak_working_set,
        }
        if self.outputs is not None:
            d["outputs"] = self.outputs
        if self.labels is not None:
            d["labels"] = self.labels
        d.update(self.extra)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_plain)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())


def _plain(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")
