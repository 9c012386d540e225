"""Software attestation: a root authority, code tokens and the signing functionality.

The functionality runs in the same process as its host party.  The host
sees everything (including the state and the randomness counters); what it
cannot do is produce a valid signature, so any change it makes to the state
or to messages is detected.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

TOKEN_VERSION = 1
TOKEN_BYTES = 1 + 32 + 32 + 64
SIG_BYTES = 64


class AttestError(RuntimeError):
    pass


class TokenError(AttestError):
    pass


class AttestHalt(AttestError):
    """The functionality refuses to continue (tampered or stale state)."""


def raw_public(key: Ed25519PublicKey) -> bytes:
    return key.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)


def verify_sig(vk: bytes, sig: bytes, msg: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(vk).verify(sig, msg)
        return True
    except (InvalidSignature, ValueError):
        return False


_PROTOCOL_MODULES = (
    "ring.py",
    "prf.py",
    "kernels.py",
    "fixedpoint.py",
    "porthos",
    "aramis/attest.py",
    "aramis/channel.py",
)


def code_hash(root: Path | None = None, extra: bytes = b"") -> bytes:
    """SHA-256 over the sources of the next-message code, in a fixed order."""
    root = Path(root) if root is not None else Path(__file__).resolve().parent.parent
    h = hashlib.sha256()
    for entry in _PROTOCOL_MODULES:
        path = root / entry
        files = sorted(path.rglob("*.py")) if path.is_dir() else [path]
        for f in files:
            rel = f.relative_to(root).as_posix().encode()
            data = f.read_bytes()
            h.update(struct.pack("<I", len(rel)) + rel + struct.pack("<Q", len(data)) + data)
    h.update(extra)
    return h.digest()


@dataclass(frozen=True)
class AttestToken:
    code_hash: bytes
    vk: bytes
    signature: bytes
    version: int = TOKEN_VERSION

    def signed_part(self) -> bytes:
        return self.code_hash + self.vk

    def to_bytes(self) -> bytes:
        return bytes([self.version]) + self.code_hash + self.vk + self.signature

    @classmethod
    def from_bytes(cls, data: bytes) -> "AttestToken":
        if len(data) != TOKEN_BYTES:
            raise TokenError(f"token must be {TOKEN_BYTES} bytes, got {len(data)}")
        if data[0] != TOKEN_VERSION:
            raise TokenError(f"unsupported token version {data[0]}")
        return cls(data[1:33], data[33:65], data[65:], data[0])

    def verify(self, root_vk: bytes, expected_hash: bytes) -> bytes:
        """Check the root signature and the code hash; returns the party's vk."""
        if not verify_sig(root_vk, self.signature, self.signed_part()):
            raise TokenError("token signature does not verify under the root key")
        if self.code_hash != expected_hash:
            raise TokenError("token was issued for different code")
        return self.vk


def write_token(path, token: AttestToken) -> None:
    Path(path).write_bytes(token.to_bytes())


def read_token(path) -> AttestToken:
    return AttestToken.from_bytes(Path(path).read_bytes())


class RootAuthority:
    """Stand-in for the vendor attestation service."""

    def __init__(self, seed: bytes | None = None):
        if seed is None:
            self._sk = Ed25519PrivateKey.generate()
        else:
            self._sk = Ed25519PrivateKey.from_private_bytes(hashlib.sha256(b"root" + seed).digest())
        self.vk = raw_public(self._sk.public_key())
        self.registry: dict = {}

    def issue(self, party: int, code: bytes, vk: bytes) -> AttestToken:
        token = AttestToken(code, vk, self._sk.sign(code + vk))
        self.registry[party] = vk
        return token


# --------------------------------------------------------------------------
# state blobs

_STATE_HEAD = struct.Struct("<Q32s32s32sI")


@dataclass(frozen=True)
class AttestState:
    """Host-held state: counter, input digest, transcript chain head,
    digest of the last output and the PRF counters (the randomness record)."""

    ctr: int
    input_digest: bytes
    chain: bytes
    last_output: bytes
    rand_ctrs: tuple

    def encode(self) -> bytes:
        return _STATE_HEAD.pack(
            self.ctr, self.input_digest, self.chain, self.last_output, len(self.rand_ctrs)
        ) + struct.pack(f"<{len(self.rand_ctrs)}Q", *self.rand_ctrs)

    @classmethod
    def decode(cls, data: bytes) -> "AttestState":
        ctr, inp, chain, last, n = _STATE_HEAD.unpack_from(data)
        rest = data[_STATE_HEAD.size :]
        if len(rest) != 8 * n:
            raise AttestHalt("state blob has the wrong length")
        return cls(ctr, inp, chain, last, struct.unpack(f"<{n}Q", rest))


EMPTY_STATE = b""
ZERO32 = bytes(32)


class AttestFunctionality:
    """Commit-once, stateful, signing evaluator of the next-message code.

    ``compute`` takes the host's current state blob and an input record,
    checks the blob's signature and counter, applies ``step`` (the committed
    code) and returns the output record, its signature and the new signed
    state.  Any mismatch halts the functionality for good.
    """

    def __init__(self, authority: RootAuthority, party: int, key_seed: bytes | None = None):
        self.party = party
        self._authority = authority
        if key_seed is None:
            self._sk = Ed25519PrivateKey.generate()
        else:
            self._sk = Ed25519PrivateKey.from_private_bytes(hashlib.sha256(b"attest" + key_seed).digest())
        self.vk = raw_public(self._sk.public_key())
        self.committed: bytes | None = None
        self.ctr = 0
        self.halted = False
        self._state: AttestState | None = None

    def commit(self, code: bytes):
        """Returns ``(state_0, token)`` the first time; later calls are ignored."""
        if self.committed is not None:
            return None
        self.committed = code
        return EMPTY_STATE, self._authority.issue(self.party, code, self.vk)

    def sign(self, msg: bytes) -> bytes:
        return self._sk.sign(msg)

    def _halt(self, why: str):
        self.halted = True
        raise AttestHalt(why)

    def _check_state(self, blob: bytes) -> AttestState | None:
        if self.ctr == 0:
            if blob != EMPTY_STATE:
                self._halt("initial state must be empty")
            return None
        if len(blob) < SIG_BYTES:
            self._halt("state blob too short")
        body, sig = blob[:-SIG_BYTES], blob[-SIG_BYTES:]
        if not verify_sig(self.vk, sig, body):
            self._halt("state signature does not verify")
        state = AttestState.decode(body)
        if state.ctr != self.ctr or state != self._state:
            self._halt(f"stale or altered state (counter {state.ctr}, expected {self.ctr})")
        return state

    def compute(self, blob: bytes, step, record: bytes):
        """Run ``step(state, record) -> (output, new_state)`` under signature.

        Returns ``(output, ctr, signature over output || u64 ctr, new blob)``.
        """
        if self.committed is None:
            raise AttestError("compute before commit")
        if self.halted:
            raise AttestHalt("functionality halted")
        state = self._check_state(blob)
        self.ctr += 1
        output, new_state = step(state, record, self.ctr)
        if new_state.ctr != self.ctr:
            self._halt("step produced an inconsistent counter")
        self._state = new_state
        body = new_state.encode()
        sig = self._sk.sign(output + struct.pack("<Q", self.ctr))
        return output, self.ctr, sig, body + self._sk.sign(body)
