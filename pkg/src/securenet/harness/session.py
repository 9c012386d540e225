"""Run the three parties of a session as threads over one transport."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

from ..porthos.context import ProtocolContext, derive_keys
from .transport import InProcessNetwork, connect_mesh

DEFAULT_SEED = b"securenet-test-seed"


@dataclass
class SessionResult:
    results: list
    contexts: list
    errors: list
    elapsed: float
    network: object = None
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not any(self.errors)

    def raise_first(self):
        for e in self.errors:
            if e is not None:
                raise e

    def total_bytes(self) -> int:
        return sum(c.meters.total() for c in self.contexts if c is not None)

    def scope_bytes(self, prefix: str) -> int:
        return sum(c.meters.scope_total(prefix) for c in self.contexts if c is not None)

    def payload_by_channel(self) -> dict:
        out = {}
        for c in self.contexts:
            if c is not None:
                out.update(c.meters.payload)
        return out


def run_three(
    party_fn,
    args=(None, None, None),
    seed: bytes = DEFAULT_SEED,
    timeout: float | None = 60.0,
    network: InProcessNetwork | None = None,
    make_context=None,
    addresses=None,
) -> SessionResult:
    """Call ``party_fn(ctx, arg)`` for each role concurrently.

    Uses in-process queues unless ``addresses`` (three host:port pairs)
    are given, in which case the parties connect over localhost TCP.
    A party that raises closes its links so the others fail fast.
    """
    net = network if network is not None else (InProcessNetwork() if addresses is None else None)
    results = [None] * 3
    errors = [None] * 3
    contexts = [None] * 3

    def worker(role):
        endpoint = None
        try:
            if addresses is None:
                endpoint = net.endpoint(role, timeout)
            else:
                endpoint = connect_mesh(role, addresses, timeout)
            if make_context is None:
                ctx = ProtocolContext(role, derive_keys(seed, role), endpoint, timeout)
            else:
                ctx = make_context(role, endpoint)
            contexts[role] = ctx
            results[role] = party_fn(ctx, args[role])
        except BaseException as exc:  # reported to the caller
            errors[role] = exc
        finally:
            if endpoint is not None:
                endpoint.close()

    start = time.perf_counter()
    threads = [threading.Thread(target=worker, args=(r,), name=f"party-{r}", daemon=True) for r in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return SessionResult(results, contexts, errors, time.perf_counter() - start, net)


def run_party(
    party_fn,
    role: int,
    addresses,
    arg=None,
    seed: bytes = DEFAULT_SEED,
    timeout: float | None = 60.0,
    make_context=None,
    connect_window: float = 30.0,
):
    """One role of a TCP session in this process; returns ``(result, ctx)``.

    Errors propagate to the caller after the links are closed.
    """
    endpoint = connect_mesh(role, addresses, timeout, connect_window)
    try:
        if make_context is None:
            ctx = ProtocolContext(role, derive_keys(seed, role), endpoint, timeout)
        else:
            ctx = make_context(role, endpoint)
        return party_fn(ctx, arg), ctx
    finally:
        endpoint.close()
