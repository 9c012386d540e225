"""Malicious-secure sessions: token setup plus the attested channel.

Each party commits its functionality to the protocol code, exchanges its
token with both peers over control frames and refuses to continue unless
every token verifies under the root key for the same code hash.  After that
the ordinary semi-honest party code runs unchanged over
:class:`AttestedEndpoint`, and the output is released only once the
functionality has re-checked the transcript.
"""

from __future__ import annotations

import hashlib
import time

import numpy as np

from ..harness.session import DEFAULT_SEED, SessionResult, run_three
from ..harness.transport import TAG_CONTROL, InProcessNetwork, PeerClosed, TransportTimeout, decode_frame
from ..ir.hlil import LLILProgram
from ..porthos.context import P0, P1, ProtocolContext, derive_keys
from ..porthos.executor import run_inference
from .attest import AttestFunctionality, AttestToken, RootAuthority, TokenError, code_hash
from .channel import AttestedEndpoint, ProtocolAbort, channel_label

DEFAULT_TIMEOUT = 10.0


def functionality_seed(seed: bytes, role: int) -> bytes:
    return hashlib.sha256(b"functionality" + seed + bytes([role])).digest()


def exchange_tokens(endpoint, token: AttestToken, root_vk: bytes, expected_hash: bytes, timeout=None) -> dict:
    """Send our token to both peers, verify theirs; returns ``{peer: vk}``."""
    peers = [p for p in range(3) if p != endpoint.role]
    for p in peers:
        endpoint.send(p, TAG_CONTROL, token.to_bytes())
    vks = {}
    for p in peers:
        chan = channel_label(p, endpoint.role)
        try:
            tag, data = endpoint.recv(p, timeout)
        except (TransportTimeout, PeerClosed) as exc:
            raise ProtocolAbort({"round": 0, "channel": chan, "check": "token-exchange", "strategy": None,
                                 "party": endpoint.role, "detail": str(exc)}) from None
        try:
            if tag != TAG_CONTROL:
                raise TokenError("token frame has the wrong tag")
            vks[p] = AttestToken.from_bytes(data).verify(root_vk, expected_hash)
        except TokenError as exc:
            raise ProtocolAbort({"round": 0, "channel": chan, "check": "token", "strategy": None,
                                 "party": endpoint.role, "detail": str(exc)}) from None
    return vks


def input_bytes(role: int, program: LLILProgram, weights: dict | None, images) -> bytes:
    """Canonical encoding of what each party brings to the computation."""
    if role == P0:
        return b"".join(np.ascontiguousarray(weights[n], dtype="<u8").tobytes() for n in program.params)
    if role == P1:
        return np.ascontiguousarray(images, dtype="<u8").tobytes()
    return b""


class MaliciousSession:
    """Builds attested contexts for :func:`run_three`.

    ``code`` overrides the committed code hash per party (to model a party
    running modified code) and ``host_hooks[role]`` lets a host rewrite
    its state blob.
    """

    def __init__(self, seed: bytes = DEFAULT_SEED, timeout: float = DEFAULT_TIMEOUT, code=None,
                 host_hooks=None, authority: RootAuthority | None = None):
        self.seed = seed
        self.timeout = timeout
        self.expected = code_hash()
        self.code = dict(code or {})
        self.host_hooks = dict(host_hooks or {})
        self.authority = authority or RootAuthority(seed)
        self.functionalities = {r: AttestFunctionality(self.authority, r, functionality_seed(seed, r)) for r in range(3)}
        self.endpoints: dict = {}

    def make_context(self, role, raw):
        fa = self.functionalities[role]
        blob, token = fa.commit(self.code.get(role, self.expected))
        vks = exchange_tokens(raw, token, self.authority.vk, self.expected, self.timeout)
        keys = derive_keys(self.seed, role)
        ep = AttestedEndpoint(
            raw, fa, vks,
            randomness=lambda: tuple(keys[k].counter for k in sorted(keys)),
            host_hook=self.host_hooks.get(role),
        )
        ep.blob = blob
        self.endpoints[role] = ep
        return ProtocolContext(role, keys, ep, self.timeout)


def party_fn(program, weights, images, batch, chunk):
    def fn(ctx: ProtocolContext, _):
        ep: AttestedEndpoint = ctx.endpoint
        ep.start(input_bytes(ctx.role, program, weights, images))
        out = run_inference(
            ctx, program,
            weights=weights if ctx.role == P0 else None,
            images=images if ctx.role == P1 else None,
            batch=batch, chunk=chunk,
        )
        ep.finish()
        return out

    return fn


def run_malicious(
    program: LLILProgram,
    weights: dict,
    images,
    batch: int | None = None,
    chunk: int | None = None,
    seed: bytes = DEFAULT_SEED,
    timeout: float = DEFAULT_TIMEOUT,
    network: InProcessNetwork | None = None,
    session: MaliciousSession | None = None,
    addresses=None,
) -> SessionResult:
    """Run inference with every message attested.

    ``extra`` on the result carries the abort reports, the envelope overhead
    and each party's accepted inner payloads.
    """
    batch = len(images) if batch is None else batch
    session = session or MaliciousSession(seed, timeout)
    res = run_three(
        party_fn(program, weights, images, batch, chunk),
        seed=seed,
        timeout=timeout,
        network=network,
        make_context=session.make_context,
        addresses=addresses,
    )
    res.extra["aborts"] = [e.report if isinstance(e, ProtocolAbort) else None for e in res.errors]
    res.extra["envelope_bytes"] = sum(ep.overhead_bytes for ep in session.endpoints.values())
    res.extra["inner_payloads"] = {
        chan: msgs for ep in session.endpoints.values() for chan, msgs in ep.inner_payloads.items()
    }
    res.extra["session"] = session
    return res


def run_semi_honest(program, weights, images, batch=None, chunk=None, seed=DEFAULT_SEED, timeout=60.0,
                    network=None, addresses=None) -> SessionResult:
    batch = len(images) if batch is None else batch

    def fn(ctx, _):
        return run_inference(
            ctx, program,
            weights=weights if ctx.role == P0 else None,
            images=images if ctx.role == P1 else None,
            batch=batch, chunk=chunk,
        )

    return run_three(fn, seed=seed, timeout=timeout, network=network, addresses=addresses)


def logged_payloads(net: InProcessNetwork) -> dict:
    """Semi-honest frames as ``tag || payload`` per channel (needs ``keep_log``)."""
    out = {}
    for (src, dst), frames in net.log.items():
        msgs = []
        for f in frames:
            tag, payload = decode_frame(f)
            msgs.append(bytes([tag]) + payload)
        if msgs:
            out[channel_label(src, dst)] = msgs
    return out


def compare_runs(program, weights, images, chunk=None, seed=DEFAULT_SEED) -> dict:
    """Paired semi-honest and malicious runs under the same seed."""
    net = InProcessNetwork()
    net.keep_log = True
    t0 = time.perf_counter()
    semi = run_semi_honest(program, weights, images, chunk=chunk, seed=seed, network=net)
    t_semi = time.perf_counter() - t0
    semi.raise_first()
    t0 = time.perf_counter()
    mal = run_malicious(program, weights, images, chunk=chunk, seed=seed)
    t_mal = time.perf_counter() - t0
    mal.raise_first()
    return {
        "semi_honest": semi,
        "malicious": mal,
        "outputs_equal": bool(np.array_equal(semi.results[P0], mal.results[P0])
                              and np.array_equal(semi.results[P1], mal.results[P1])),
        "transcripts_equal": logged_payloads(net) == mal.extra["inner_payloads"],
        "semi_seconds": t_semi,
        "malicious_seconds": t_mal,
        "overhead": t_mal / t_semi if t_semi > 0 else float("inf"),
        "semi_bytes": semi.total_bytes(),
        "envelope_bytes": mal.extra["envelope_bytes"],
    }
