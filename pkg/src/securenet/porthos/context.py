"""Per-party protocol state: role, PRF keys, links and byte meters."""

from __future__ import annotations

import contextlib
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..harness.transport import HEADER_BYTES, Endpoint
from ..prf import PrfKey, expand_array, expand_bits, expand_nonzero_zp, expand_permutations
from ..ring import Ring, RingError

P0, P1, P2 = 0, 1, 2

# which parties hold each PRF key
KEY_HOLDERS = {"k0": (P0, P2), "k1": (P1, P2), "k01": (P0, P1)}


def channel_name(src: int, dst: int) -> str:
    return f"P{src}->P{dst}"


def derive_keys(seed: bytes, role: int) -> dict:
    """Test-mode keys: every party derives its keys from shared seed material."""
    return {name: PrfKey.derive(seed, name) for name, holders in KEY_HOLDERS.items() if role in holders}


class ProtocolError(RuntimeError):
    pass


@dataclass
class Meters:
    """Bytes this party sent, by channel and by protocol scope."""

    payload: dict = field(default_factory=lambda: defaultdict(int))
    frames: dict = field(default_factory=lambda: defaultdict(int))
    header: dict = field(default_factory=lambda: defaultdict(int))
    scopes: dict = field(default_factory=lambda: defaultdict(int))
    # P2 only: (instances whose share went to P0, instances whose share went to P1)
    fresh_shares: list = field(default_factory=list)
    counters: dict = field(default_factory=lambda: defaultdict(int))

    def record(self, channel: str, scope: str, nbytes: int) -> None:
        self.payload[channel] += nbytes
        self.frames[channel] += 1
        self.header[channel] += HEADER_BYTES
        self.scopes[scope] += nbytes

    def total(self) -> int:
        return sum(self.payload.values())

    def scope_total(self, prefix: str) -> int:
        return sum(v for k, v in self.scopes.items() if k == prefix or k.startswith(prefix + "/"))

    def snapshot(self) -> dict:
        return {
            "payload": dict(self.payload),
            "frames": dict(self.frames),
            "header": dict(self.header),
            "scopes": dict(self.scopes),
            "counters": dict(self.counters),
        }


class ProtocolContext:
    """Everything one party needs to run protocol code.

    Protocol functions are written once and branch on :attr:`role`.  The
    helper P2 passes placeholder arrays of the right shape where P0/P1 pass
    their shares.
    """

    def __init__(self, role: int, keys: dict, endpoint: Endpoint, timeout: float | None = None):
        if role not in (P0, P1, P2):
            raise ValueError(f"bad role {role}")
        for name in keys:
            if role not in KEY_HOLDERS[name]:
                raise ValueError(f"P{role} must not hold {name}")
        self.role = role
        self.keys = dict(keys)
        self.endpoint = endpoint
        self.timeout = timeout
        self.meters = Meters()
        self.instance_counter = 0
        self._scope: list = []

    # -- naming -------------------------------------------------------------

    @property
    def j(self) -> int:
        """0 for P0, 1 for P1 (the share index)."""
        return self.role

    @property
    def is_helper(self) -> bool:
        return self.role == P2

    @property
    def other(self) -> int:
        if self.role == P2:
            raise ProtocolError("P2 has no share partner")
        return 1 - self.role

    @contextlib.contextmanager
    def scope(self, name: str):
        self._scope.append(name)
        try:
            yield
        finally:
            self._scope.pop()

    @property
    def scope_name(self) -> str:
        return "/".join(self._scope) or "other"

    def count(self, name: str, n: int) -> None:
        self.meters.counters[name] += int(n)

    # -- randomness -----------------------------------------------------------

    def key(self, name: str) -> PrfKey:
        try:
            return self.keys[name]
        except KeyError:
            raise ProtocolError(f"P{self.role} does not hold {name}") from None

    def draw(self, keyname: str, ring: Ring, shape) -> np.ndarray:
        return expand_array(self.key(keyname), ring, None, shape=tuple(shape))

    def draw_bits(self, keyname: str, shape) -> np.ndarray:
        return expand_bits(self.key(keyname), tuple(shape))

    def draw_nonzero_zp(self, keyname: str, shape) -> np.ndarray:
        return expand_nonzero_zp(self.key(keyname), tuple(shape))

    def draw_permutations(self, keyname: str, rows: int, n: int) -> np.ndarray:
        return expand_permutations(self.key(keyname), rows, n)

    def zero_share(self, ring: Ring, shape) -> np.ndarray:
        """P0 gets U, P1 gets -U, with U drawn from the key they share."""
        u = self.draw("k01", ring, shape)
        return u if self.role == P0 else ring.neg(u)

    def placeholder(self, ring: Ring, shape) -> np.ndarray:
        return ring.zeros(tuple(shape))

    # -- messaging ------------------------------------------------------------

    def send(self, peer: int, ring: Ring, arr) -> None:
        payload = ring.encode(arr)
        self.endpoint.send(peer, ring.wire_tag, payload)
        self.meters.record(channel_name(self.role, peer), self.scope_name, len(payload))

    def recv(self, peer: int, ring: Ring, shape) -> np.ndarray:
        tag, payload = self.endpoint.recv(peer, self.timeout)
        if tag != ring.wire_tag:
            raise ProtocolError(f"P{self.role} expected a {ring.value} frame from P{peer}, got tag {tag}")
        try:
            return ring.decode(payload, tuple(shape))
        except RingError as exc:
            raise ProtocolError(f"malformed message from P{peer}: {exc}") from None

    def exchange(self, ring: Ring, arr) -> np.ndarray:
        """P0/P1 swap equally shaped arrays."""
        arr = np.asarray(arr)
        self.send(self.other, ring, arr)
        return self.recv(self.other, ring, arr.shape)
