"""Length-prefixed frames over in-process queues or TCP.

Frame layout: ``u32 LE payload length | u8 tag | payload``.  Tags 1-3 carry
ring elements (see :attr:`Ring.wire_tag`), 0x10 a signed envelope and 0x20
control traffic (handshakes, key setup).
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
import time

HEADER = struct.Struct("<IB")
HEADER_BYTES = HEADER.size
TAG_SIGNED = 0x10
TAG_CONTROL = 0x20
MAX_FRAME = 1 << 31


class TransportError(RuntimeError):
    pass


class PeerClosed(TransportError):
    pass


class TransportTimeout(TransportError):
    pass


class FrameError(TransportError):
    pass


def encode_frame(tag: int, payload: bytes) -> bytes:
    if len(payload) >= MAX_FRAME:
        raise FrameError("frame too large")
    return HEADER.pack(len(payload), tag) + payload


def decode_frame(frame: bytes) -> tuple[int, bytes]:
    if len(frame) < HEADER_BYTES:
        raise FrameError("short frame header")
    length, tag = HEADER.unpack_from(frame)
    if len(frame) - HEADER_BYTES != length:
        raise FrameError(f"frame says {length} payload bytes, carries {len(frame) - HEADER_BYTES}")
    return tag, frame[HEADER_BYTES:]


class Endpoint:
    """One party's view of its links; ``peer`` is the other party's role."""

    role: int
    timeout: float | None = None

    def send(self, peer: int, tag: int, payload: bytes) -> None:
        raise NotImplementedError

    def recv(self, peer: int, timeout: float | None = None) -> tuple[int, bytes]:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


_CLOSED = object()


class InProcessNetwork:
    """Queues between every ordered pair of parties.

    ``interceptors[(src, dst)]`` may hold a callable that receives each
    encoded frame and returns the list of frames to deliver instead; the
    tamper harness uses it as a man-in-the-middle.
    """

    def __init__(self, parties: int = 3):
        self.parties = parties
        self.queues = {(a, b): queue.Queue() for a in range(parties) for b in range(parties) if a != b}
        self.interceptors: dict = {}
        self.log: dict = {k: [] for k in self.queues}
        self.keep_log = False

    def endpoint(self, role: int, timeout: float | None = None) -> "QueueEndpoint":
        return QueueEndpoint(self, role, timeout)

    def deliver(self, src: int, dst: int, frame: bytes) -> None:
        if self.keep_log:
            self.log[(src, dst)].append(frame)
        hook = self.interceptors.get((src, dst))
        frames = [frame] if hook is None else hook(frame)
        for f in frames:
            self.queues[(src, dst)].put(f)

    def flush(self, src: int, dst: int) -> None:
        hook = self.interceptors.get((src, dst))
        if hook is not None and hasattr(hook, "flush"):
            for f in hook.flush():
                self.queues[(src, dst)].put(f)


class QueueEndpoint(Endpoint):
    def __init__(self, net: InProcessNetwork, role: int, timeout=None):
        self.net = net
        self.role = role
        self.timeout = timeout
        self.closed = False

    def send(self, peer, tag, payload):
        if self.closed:
            raise PeerClosed("endpoint already closed")
        self.net.deliver(self.role, peer, encode_frame(tag, payload))

    def recv(self, peer, timeout=None):
        timeout = self.timeout if timeout is None else timeout
        try:
            item = self.net.queues[(peer, self.role)].get(timeout=timeout)
        except queue.Empty:
            raise TransportTimeout(f"P{self.role} waited {timeout}s for P{peer}") from None
        if item is _CLOSED:
            # keep the marker so later reads fail the same way
            self.net.queues[(peer, self.role)].put(_CLOSED)
            raise PeerClosed(f"P{peer} closed its link to P{self.role}")
        return decode_frame(item)

    def close(self):
        if self.closed:
            return
        self.closed = True
        for peer in range(self.net.parties):
            if peer != self.role:
                self.net.flush(self.role, peer)
                self.net.queues[(self.role, peer)].put(_CLOSED)


# --------------------------------------------------------------------------
# TCP


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except socket.timeout:
            raise TransportTimeout("socket read timed out") from None
        except OSError as exc:
            raise PeerClosed(str(exc)) from None
        if not chunk:
            raise PeerClosed("connection closed by peer")
        buf += chunk
    return bytes(buf)


class _Link:
    """A socket plus a writer thread so sends never block the protocol."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.outbox: queue.Queue = queue.Queue()
        self.error: Exception | None = None
        self.writer = threading.Thread(target=self._write_loop, daemon=True)
        self.writer.start()

    def _write_loop(self):
        while True:
            item = self.outbox.get()
            if item is _CLOSED:
                break
            try:
                self.sock.sendall(item)
            except OSError as exc:
                self.error = exc
                break

    def send(self, frame: bytes):
        if self.error is not None:
            raise PeerClosed(f"write failed: {self.error}")
        self.outbox.put(frame)

    def recv(self, timeout):
        self.sock.settimeout(timeout)
        length, tag = HEADER.unpack(_recv_exact(self.sock, HEADER_BYTES))
        return tag, _recv_exact(self.sock, length)

    def close(self):
        self.outbox.put(_CLOSED)
        self.writer.join(timeout=5)
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class TcpEndpoint(Endpoint):
    def __init__(self, role: int, links: dict, timeout=None):
        self.role = role
        self.links = links
        self.timeout = timeout

    def send(self, peer, tag, payload):
        self.links[peer].send(encode_frame(tag, payload))

    def recv(self, peer, timeout=None):
        return self.links[peer].recv(self.timeout if timeout is None else timeout)

    def close(self):
        for link in self.links.values():
            link.close()


def parse_address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def connect_mesh(role: int, addresses: list, timeout: float | None = 10.0, connect_window: float = 30.0) -> TcpEndpoint:
    """Fully connect three parties.

    Party ``i`` listens on ``addresses[i]``; each party dials every
    lower-numbered party and announces its role in a control frame.
    """
    links = {}
    listener = None
    higher = [p for p in range(len(addresses)) if p > role]
    if higher:
        listener = socket.create_server(addresses[role], reuse_port=False)
        listener.settimeout(connect_window)
    for peer in range(role):
        deadline = time.monotonic() + connect_window
        while True:
            try:
                sock = socket.create_connection(addresses[peer], timeout=connect_window)
                break
            except OSError:
                if time.monotonic() > deadline:
                    raise TransportTimeout(f"could not reach P{peer} at {addresses[peer]}") from None
                time.sleep(0.05)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.sendall(encode_frame(TAG_CONTROL, bytes([role])))
        links[peer] = _Link(sock)
    try:
        for _ in higher:
            try:
                sock, _addr = listener.accept()
            except socket.timeout:
                raise TransportTimeout(f"P{role} timed out waiting for peers") from None
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            sock.settimeout(connect_window)
            length, tag = HEADER.unpack(_recv_exact(sock, HEADER_BYTES))
            hello = _recv_exact(sock, length)
            if tag != TAG_CONTROL or length != 1 or hello[0] not in higher or hello[0] in links:
                sock.close()
                raise FrameError("bad handshake")
            links[hello[0]] = _Link(sock)
    finally:
        if listener is not None:
            listener.close()
    return TcpEndpoint(role, links, timeout)
