"""The attested next-message wrapper.

:class:`AttestedEndpoint` sits between protocol code and the raw transport.
Every outgoing message is produced by the attestation functionality and
signed; every incoming message must carry a valid signature from the
sender's functionality, the next per-channel sequence number and a larger
functionality counter than the last one seen.  Anything else aborts the
party with a report naming the round, channel and failed check.

Envelope payload (frame tag 0x10)::

    u8 inner tag | u64 seq | u64 ctr | inner payload | 64-byte signature

The signature covers ``inner tag || inner payload || u64 seq || u8 direction || u64 ctr``
where direction = 3 * sender + receiver.
"""

from __future__ import annotations

import hashlib
import struct

from ..harness.transport import TAG_SIGNED, Endpoint, FrameError, PeerClosed, TransportTimeout
from .attest import (
    SIG_BYTES,
    ZERO32,
    AttestFunctionality,
    AttestHalt,
    AttestState,
    verify_sig,
)

_ENV_HEAD = struct.Struct("<BQQ")
ENVELOPE_OVERHEAD = _ENV_HEAD.size + SIG_BYTES


class ProtocolAbort(RuntimeError):
    def __init__(self, report: dict):
        super().__init__(f"abort: {report}")
        self.report = report


def direction(src: int, dst: int) -> int:
    return 3 * src + dst


def channel_label(src: int, dst: int) -> str:
    return f"P{src}->P{dst}"


def message_bytes(tag: int, payload: bytes, seq: int, src: int, dst: int) -> bytes:
    return bytes([tag]) + payload + struct.pack("<QB", seq, direction(src, dst))


def signed_bytes(msg: bytes, ctr: int) -> bytes:
    return msg + struct.pack("<Q", ctr)


def pack_envelope(tag: int, seq: int, ctr: int, payload: bytes, sig: bytes) -> bytes:
    return _ENV_HEAD.pack(tag, seq, ctr) + payload + sig


def unpack_envelope(data: bytes):
    if len(data) < ENVELOPE_OVERHEAD:
        raise FrameError("envelope too short")
    tag, seq, ctr = _ENV_HEAD.unpack_from(data)
    return tag, seq, ctr, data[_ENV_HEAD.size : -SIG_BYTES], data[-SIG_BYTES:]


def _h(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.digest()


class AttestedEndpoint(Endpoint):
    """Routes one party's traffic through its attestation functionality.

    ``host_hook(index, blob) -> blob`` lets a (possibly malicious) host see
    and replace the state blob before each functionality call.
    """

    def __init__(
        self,
        raw: Endpoint,
        fa: AttestFunctionality,
        peer_vks: dict,
        randomness=lambda: (),
        host_hook=None,
    ):
        self.raw = raw
        self.role = raw.role
        self.timeout = raw.timeout
        self.fa = fa
        self.peer_vks = dict(peer_vks)
        self.randomness = randomness
        self.host_hook = host_hook
        self.blob = b""
        self.calls = 0
        self.send_seq: dict = {}
        self.recv_seq: dict = {}
        self.last_ctr: dict = {}
        self.transcript: list = []  # (kind, message bytes), kept by the host
        self.overhead_bytes = 0
        self.inner_payloads: dict = {}

    # -- functionality plumbing ------------------------------------------------

    def _compute(self, step, record: bytes, check: str = "state"):
        blob = self.blob
        if self.host_hook is not None:
            blob = self.host_hook(self.calls, blob)
        self.calls += 1
        try:
            out, ctr, sig, self.blob = self.fa.compute(blob, step, record)
        except AttestHalt as exc:
            raise ProtocolAbort(self._report("functionality", check, str(exc))) from None
        return out, ctr, sig

    def _report(self, channel, check, detail=""):
        return {"round": self.fa.ctr, "channel": channel, "check": check, "strategy": None, "party": self.role,
                "detail": detail}

    def _advance(self, state: AttestState, kind: bytes, msg: bytes, ctr: int, out: bytes) -> AttestState:
        return AttestState(ctr, state.input_digest, _h(state.chain, kind, msg), out, tuple(self.randomness()))

    def start(self, input_bytes: bytes) -> None:
        """First call: bind this party's input into the state."""

        def step(state, record, ctr):
            digest = _h(b"input", record)
            return b"", AttestState(ctr, digest, _h(b"chain", digest), ZERO32, tuple(self.randomness()))

        self._compute(step, input_bytes)

    def finish(self) -> None:
        """Re-derive the transcript chain from the host's copy and compare."""
        transcript = list(self.transcript)

        def step(state, record, ctr):
            chain = _h(b"chain", state.input_digest)
            for kind, msg in transcript:
                chain = _h(chain, kind, msg)
            if chain != state.chain:
                raise AttestHalt("transcript does not match the signed chain")
            return b"", AttestState(ctr, state.input_digest, state.chain, state.last_output, state.rand_ctrs)

        self._compute(step, b"finish", check="transcript")

    # -- Endpoint interface ----------------------------------------------------

    def send(self, peer, tag, payload):
        seq = self.send_seq.get(peer, 0)
        msg = message_bytes(tag, payload, seq, self.role, peer)

        def step(state, record, ctr):
            return record, self._advance(state, b"S", record, ctr, _h(record))

        out, ctr, sig = self._compute(step, msg)
        self.send_seq[peer] = seq + 1
        self.transcript.append((b"S", msg))
        # the functionality's output signature already covers msg || ctr
        envelope = pack_envelope(tag, seq, ctr, payload, sig)
        self.overhead_bytes += ENVELOPE_OVERHEAD
        self.raw.send(peer, TAG_SIGNED, envelope)

    def recv(self, peer, timeout=None):
        chan = channel_label(peer, self.role)
        try:
            ftag, data = self.raw.recv(peer, timeout)
        except TransportTimeout:
            raise ProtocolAbort(self._report(chan, "timeout")) from None
        except PeerClosed:
            raise ProtocolAbort(self._report(chan, "peer-closed")) from None
        except FrameError:
            raise ProtocolAbort(self._report(chan, "format")) from None
        if ftag != TAG_SIGNED:
            raise ProtocolAbort(self._report(chan, "unsigned"))
        try:
            tag, seq, ctr, payload, sig = unpack_envelope(data)
        except FrameError:
            raise ProtocolAbort(self._report(chan, "format")) from None
        msg = message_bytes(tag, payload, seq, peer, self.role)
        if not verify_sig(self.peer_vks[peer], sig, signed_bytes(msg, ctr)):
            raise ProtocolAbort(self._report(chan, "signature"))
        expected = self.recv_seq.get(peer, 0)
        if seq != expected:
            raise ProtocolAbort(self._report(chan, "sequence", f"got {seq}, expected {expected}"))
        if ctr <= self.last_ctr.get(peer, 0):
            raise ProtocolAbort(self._report(chan, "counter"))
        self.recv_seq[peer] = expected + 1
        self.last_ctr[peer] = ctr

        def step(state, record, c):
            return b"", self._advance(state, b"R", record, c, state.last_output)

        self._compute(step, msg)
        self.transcript.append((b"R", msg))
        self.inner_payloads.setdefault(chan, []).append(bytes([tag]) + payload)
        return tag, payload

    def close(self):
        self.raw.close()
