"""Man-in-the-middle and malicious-host fuzzing of attested sessions.

A campaign first runs the session cleanly to count the signed frames on
every channel, then re-runs it once per (strategy, injection point) with an
interceptor on that channel.  Each run is classified:

``abort``               an honest party aborted and nobody released a wrong output
``silent-corruption``   some party released an output that differs from the clean run
``undetected``          the run completed with the clean output (the tamper had no effect)
``crash``               a party failed with something other than a protocol abort
``clean``               no tampering was requested and the run completed correctly
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field

import numpy as np
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

from ..fixedpoint import FixedModel, quantize_input, quantize_model
from ..harness.session import DEFAULT_SEED
from ..harness.transport import HEADER_BYTES, TAG_SIGNED, InProcessNetwork, decode_frame, encode_frame
from ..ir.modelio import model_from_parts
from .attest import SIG_BYTES, AttestState
from .channel import ProtocolAbort, channel_label, message_bytes, pack_envelope, signed_bytes, unpack_envelope
from .malicious import MaliciousSession, run_malicious

NETWORK_STRATEGIES = ("bit-flip", "truncate", "replay", "reorder", "drop", "forge", "unsigned")
HOST_STRATEGIES = ("wrong-input-reuse",)
STRATEGIES = ("bit-flip", "truncate", "replay", "reorder", "drop", "forge", "wrong-input-reuse")
CAMPAIGN_TIMEOUT = 1.0


def tiny_model(seed: int = 0, scale: int = 8, batch: int = 2) -> tuple[FixedModel, np.ndarray]:
    """Conv, bias, ReLU, MaxPool, MatMul, ArgMax on 6x6 inputs: small but touches every protocol."""
    rng = np.random.default_rng(seed)
    graph = {
        "tensors": [
            {"name": "x", "dims": [1, 6, 6, 1]},
            {"name": "w1", "dims": [3, 3, 1, 2]},
            {"name": "b1", "dims": [2]},
            {"name": "w2", "dims": [8, 3]},
        ],
        "nodes": [
            {"op": "Conv", "inputs": ["x", "w1"], "output": "c", "attrs": {"strides": [1, 1], "padding": "VALID"}},
            {"op": "MatAdd", "inputs": ["c", "b1"], "output": "cb"},
            {"op": "ReLU", "inputs": ["cb"], "output": "r"},
            {"op": "MaxPool", "inputs": ["r"], "output": "p", "attrs": {"pool": [2, 2]}},
            {"op": "Flatten", "inputs": ["p"], "output": "flat"},
            {"op": "MatMul", "inputs": ["flat", "w2"], "output": "logits"},
            {"op": "ArgMax", "inputs": ["logits"], "output": "label"},
        ],
        "input": "x",
        "output": "label",
    }
    weights = {
        "w1": rng.normal(size=(3, 3, 1, 2)).astype(np.float32),
        "b1": rng.normal(size=2).astype(np.float32),
        "w2": rng.normal(size=(8, 3)).astype(np.float32),
    }
    _, fm = model_from_parts(graph, weights)
    images = quantize_input(rng.normal(size=(batch, 6, 6, 1)).astype(np.float32), scale)
    return quantize_model(fm, scale), images


# --------------------------------------------------------------------------
# interceptors


class FrameCounter:
    def __init__(self):
        self.signed = 0

    def __call__(self, frame):
        if frame[HEADER_BYTES - 1] == TAG_SIGNED:
            self.signed += 1
        return [frame]


def _with_payload(frame: bytes, payload: bytes) -> bytes:
    tag, _ = decode_frame(frame)
    return encode_frame(tag, payload)


class Interceptor:
    """Applies one strategy to the ``index``-th signed frame on a channel."""

    def __init__(self, strategy: str, src: int, dst: int, index: int, rng: random.Random):
        if strategy not in NETWORK_STRATEGIES:
            raise ValueError(f"unknown network strategy {strategy!r}")
        self.strategy = strategy
        self.src, self.dst = src, dst
        self.index = index
        self.rng = rng
        self.seen = 0
        self.prev = None
        self.held = None
        self.fired = False

    def __call__(self, frame: bytes) -> list:
        if frame[HEADER_BYTES - 1] != TAG_SIGNED:
            return [frame]
        i = self.seen
        self.seen += 1
        prev, self.prev = self.prev, frame
        if self.held is not None:
            held, self.held = self.held, None
            return [frame, held]
        if i != self.index:
            return [frame]
        self.fired = True
        return getattr(self, "_" + self.strategy.replace("-", "_"))(frame, prev)

    def flush(self) -> list:
        held, self.held = self.held, None
        return [] if held is None else [held]

    def _bit_flip(self, frame, _prev):
        pos = self.rng.randrange(HEADER_BYTES * 8, len(frame) * 8)
        out = bytearray(frame)
        out[pos // 8] ^= 1 << (pos % 8)
        return [bytes(out)]

    def _truncate(self, frame, _prev):
        _, payload = decode_frame(frame)
        cut = self.rng.randrange(1, min(len(payload), 2 * SIG_BYTES))
        return [_with_payload(frame, payload[:-cut])]

    def _replay(self, frame, prev):
        return [prev, frame] if prev is not None else [frame, frame]

    def _reorder(self, frame, _prev):
        self.held = frame
        return []

    def _drop(self, frame, _prev):
        return []

    def _forge(self, frame, _prev):
        # alter the content and re-sign it with a key the adversary made up
        _, data = decode_frame(frame)
        tag, seq, ctr, payload, _sig = unpack_envelope(data)
        body = bytearray(payload)
        if body:
            pos = self.rng.randrange(len(body) * 8)
            body[pos // 8] ^= 1 << (pos % 8)
        body = bytes(body)
        msg = signed_bytes(message_bytes(tag, body, seq, self.src, self.dst), ctr)
        sig = Ed25519PrivateKey.generate().sign(msg)
        return [_with_payload(frame, pack_envelope(tag, seq, ctr, body, sig))]

    def _unsigned(self, frame, _prev):
        # substitute a bare protocol message of the adversary's choosing
        _, data = decode_frame(frame)
        tag, _seq, _ctr, payload, _sig = unpack_envelope(data)
        return [encode_frame(tag, bytes(len(payload)))]


class InputReuseHook:
    """Host hook that tries to swap its party's input after the first round.

    Even injection points edit the input digest in the current state (the
    signature no longer matches); odd points roll the state back to the one
    produced by the input round, as if restarting with a new input.
    """

    def __init__(self, index: int, variant: str = "edit"):
        self.index = index
        self.variant = variant
        self.history: list = []
        self.fired = False

    def __call__(self, call: int, blob: bytes) -> bytes:
        self.history.append(blob)
        if call != self.index:
            return blob
        self.fired = True
        if self.variant == "rollback":
            return self.history[1]
        body, sig = blob[:-SIG_BYTES], blob[-SIG_BYTES:]
        st = AttestState.decode(body)
        forged = AttestState(st.ctr, hashlib.sha256(b"another input").digest(), st.chain, st.last_output, st.rand_ctrs)
        return forged.encode() + sig


# --------------------------------------------------------------------------
# campaign


@dataclass
class TamperOutcome:
    strategy: str
    point: tuple
    outcome: str
    reports: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"strategy": self.strategy, "point": list(self.point), "outcome": self.outcome, "reports": self.reports}


@dataclass
class CampaignReport:
    outcomes: list
    clean_frames: dict

    def by_strategy(self) -> dict:
        table: dict = {}
        for o in self.outcomes:
            row = table.setdefault(o.strategy, {})
            row[o.outcome] = row.get(o.outcome, 0) + 1
        return table

    def abort_rate(self, strategy: str | None = None) -> float:
        sel = [o for o in self.outcomes if strategy is None or o.strategy == strategy]
        return sum(o.outcome == "abort" for o in sel) / len(sel) if sel else 0.0

    @property
    def silent_corruptions(self) -> int:
        return sum(o.outcome == "silent-corruption" for o in self.outcomes)

    def to_json(self) -> str:
        return json.dumps(
            {"summary": self.by_strategy(), "clean_frames": self.clean_frames,
             "runs": [o.to_json() for o in self.outcomes]},
            indent=2,
        )


def classify(res, clean, adversary=None, expect_tamper=True) -> tuple[str, list]:
    reports = []
    honest_abort = False
    wrong = False
    for role, (out, err) in enumerate(zip(res.results, res.errors)):
        if err is not None:
            if not isinstance(err, ProtocolAbort):
                return "crash", [{"party": role, "error": repr(err)}]
            reports.append(err.report)
            if role != adversary:
                honest_abort = True
        elif out is not None and not np.array_equal(out, clean[role]):
            wrong = True
    if wrong:
        return "silent-corruption", reports
    if honest_abort:
        return "abort", reports
    return ("undetected" if expect_tamper else "clean"), reports


class TamperCampaign:
    """Runs a tamper campaign against one model and input batch."""

    def __init__(self, model: FixedModel, images, seed: bytes = DEFAULT_SEED, timeout: float = CAMPAIGN_TIMEOUT):
        self.model = model
        self.images = images
        self.seed = seed
        self.timeout = timeout
        self.clean = None
        self.frames: dict = {}
        self.calls: dict = {}

    def _run(self, network=None, host_hooks=None):
        session = MaliciousSession(self.seed, self.timeout, host_hooks=host_hooks)
        res = run_malicious(self.model.program, self.model.weights, self.images, seed=self.seed,
                            timeout=self.timeout, network=network, session=session)
        return res, session

    def baseline(self):
        net = InProcessNetwork()
        counters = {k: FrameCounter() for k in net.queues}
        net.interceptors.update(counters)
        res, session = self._run(net)
        res.raise_first()
        self.clean = list(res.results)
        self.frames = {k: c.signed for k, c in counters.items() if c.signed}
        self.calls = {r: ep.calls for r, ep in session.endpoints.items()}
        return res

    def points(self, strategy: str, count: int, rng: random.Random) -> list:
        if strategy in HOST_STRATEGIES:
            pool = [(role, i) for role, n in sorted(self.calls.items()) for i in range(2, n)]
        else:
            lo = 1 if strategy == "replay" else 0
            pool = []
            for (src, dst), n in sorted(self.frames.items()):
                hi = n - 1 if strategy == "reorder" else n
                pool += [(src, dst, i) for i in range(lo, hi)]
        if len(pool) < count:
            raise ValueError(f"only {len(pool)} injection points for {strategy}")
        return sorted(rng.sample(pool, count))

    def run_one(self, strategy: str, point: tuple, rng: random.Random) -> TamperOutcome:
        if strategy == "none":
            res, _ = self._run()
            outcome, reports = classify(res, self.clean, expect_tamper=False)
        elif strategy in HOST_STRATEGIES:
            role, index = point
            hook = InputReuseHook(index, "rollback" if index % 2 else "edit")
            res, _ = self._run(host_hooks={role: hook})
            outcome, reports = classify(res, self.clean, adversary=role)
        else:
            src, dst, index = point
            net = InProcessNetwork()
            net.interceptors[(src, dst)] = Interceptor(strategy, src, dst, index, rng)
            res, _ = self._run(net)
            outcome, reports = classify(res, self.clean)
        for r in reports:
            r["strategy"] = strategy
        return TamperOutcome(strategy, tuple(point), outcome, reports)

    def run(self, strategies=STRATEGIES, points_per_strategy: int = 20, rng_seed: int = 0) -> CampaignReport:
        if self.clean is None:
            self.baseline()
        rng = random.Random(rng_seed)
        outcomes = []
        for strategy in strategies:
            for point in self.points(strategy, points_per_strategy, rng):
                outcomes.append(self.run_one(strategy, point, rng))
        frames = {channel_label(*k): n for k, n in self.frames.items()}
        return CampaignReport(outcomes, frames)


def describe_point(point: tuple) -> str:
    if len(point) == 2:
        return f"P{point[0]} call {point[1]}"
    return f"{channel_label(point[0], point[1])} frame {point[2]}"

