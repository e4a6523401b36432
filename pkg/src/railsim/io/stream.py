"""Length-prefixed binary frames over TCP.

Header (little-endian, 18 bytes)::

    magic  4s   b"RSTM"
    version u8  1
    type    u8  MessageType
    stamp   u64 nanoseconds
    length  u32 payload bytes

Payloads are byte-for-byte the on-disk encodings from :mod:`.formats`.
The server never blocks the producer: every client has a bounded queue and
is dropped when it falls ``backlog`` frames behind.
"""

from __future__ import annotations

import enum
import logging
import queue
import socket
import struct
import threading
from dataclasses import dataclass

log = logging.getLogger(__name__)

MAGIC = b"RSTM"
VERSION = 1
HEADER = struct.Struct("<4sBBQI")
DEFAULT_BACKLOG = 64


class MessageType(enum.IntEnum):
    POINT_CLOUD = 1
    DEPTH_IMAGE = 2
    SEG_IMAGE = 3
    RGB_IMAGE = 4
    IMU = 5
    POSE = 6
    POINT_LABELS = 7


class StreamError(ValueError):
    pass


@dataclass(frozen=True)
class Message:
    type: MessageType
    timestamp_ns: int
    payload: bytes
    version: int = VERSION


def encode(msg: Message) -> bytes:
    if not 0 <= msg.timestamp_ns < 2**64:
        raise StreamError("timestamp out of u64 range")
    if len(msg.payload) >= 2**32:
        raise StreamError("payload too large")
    return HEADER.pack(MAGIC, msg.version, int(msg.type), msg.timestamp_ns, len(msg.payload)) + bytes(msg.payload)


class Decoder:
    """Incremental decoder: feed arbitrary chunks, get whole messages back.

    A bad magic or unknown type poisons the decoder; there is no attempt to
    resynchronise on a corrupt stream.
    """

    def __init__(self):
        self._buf = bytearray()
        self._error: StreamError | None = None

    def feed(self, data: bytes) -> list[Message]:
        if self._error is not None:
            raise self._error
        self._buf += data
        out = []
        while len(self._buf) >= HEADER.size:
            magic, version, typ, stamp, length = HEADER.unpack_from(self._buf)
            try:
                if magic != MAGIC:
                    raise StreamError(f"bad magic {bytes(magic)!r}")
                if version != VERSION:
                    raise StreamError(f"unsupported version {version}")
                mtype = MessageType(typ)
            except (StreamError, ValueError) as e:
                self._error = e if isinstance(e, StreamError) else StreamError(str(e))
                raise self._error from None
            end = HEADER.size + length
            if len(self._buf) < end:
                break
            out.append(Message(mtype, stamp, bytes(self._buf[HEADER.size:end]), version))
            del self._buf[:end]
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)


def decode_all(data: bytes) -> list[Message]:
    d = Decoder()
    msgs = d.feed(data)
    if d.pending:
        raise StreamError(f"{d.pending} trailing bytes")
    return msgs


class _Client:
    def __init__(self, sock: socket.socket, addr, backlog: int):
        self.sock = sock
        self.addr = addr
        self.queue: queue.Queue = queue.Queue(maxsize=backlog)
        self.alive = True
        self.thread = threading.Thread(target=self._run, daemon=True)

    def _run(self):
        try:
            while True:
                item = self.queue.get()
                if item is None:
                    break
                self.sock.sendall(item)
        except OSError as e:
            log.info("client %s disconnected: %s", self.addr, e)
        finally:
            self.alive = False
            try:
                self.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self.sock.close()


class StreamServer:
    """Accepts any number of clients and fans every published frame out to them."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, backlog: int = DEFAULT_BACKLOG):
        self.backlog = backlog
        self._lock = threading.Lock()
        self._clients: list[_Client] = []
        self._connected = threading.Condition(self._lock)
        self._sock = socket.create_server((host, port))
        self._sock.settimeout(0.2)
        self.address = self._sock.getsockname()[:2]
        self._stop = threading.Event()
        self._accept = threading.Thread(target=self._accept_loop, daemon=True)
        self.dropped = 0

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.close()

    def start(self):
        self._accept.start()
        return self

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                sock, addr = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            c = _Client(sock, addr, self.backlog)
            c.thread.start()
            with self._lock:
                self._clients.append(c)
                self._connected.notify_all()
            log.info("client %s connected", addr)

    def wait_for_clients(self, n: int, timeout: float | None = None) -> bool:
        with self._lock:
            return self._connected.wait_for(lambda: len(self._clients) >= n, timeout)

    @property
    def n_clients(self) -> int:
        with self._lock:
            return sum(c.alive for c in self._clients)

    def publish(self, msg: Message) -> None:
        data = encode(msg)
        with self._lock:
            for c in self._clients:
                if not c.alive:
                    continue
                try:
                    c.queue.put_nowait(data)
                except queue.Full:
                    log.warning("client %s fell %d frames behind; disconnecting", c.addr, self.backlog)
                    self.dropped += 1
                    c.alive = False
                    try:
                        c.sock.shutdown(socket.SHUT_RDWR)
                    except OSError:
                        pass

    def close(self, drain: bool = True):
        """Stop accepting; with ``drain`` let healthy clients receive what is queued."""
        self._stop.set()
        with self._lock:
            clients = list(self._clients)
        for c in clients:
            if c.alive and drain:
                c.queue.put(None)
            elif c.alive:
                c.alive = False
                c.sock.close()
        for c in clients:
            c.thread.join(timeout=10)
        self._accept.join(timeout=2)
        self._sock.close()


def stream_serve(frames, host: str = "127.0.0.1", port: int = 0, wait_clients: int = 0, timeout: float | None = None,
                 backlog: int = DEFAULT_BACKLOG, on_ready=None) -> int:
    """Publish every message from ``frames``; returns the number sent."""
    n = 0
    with StreamServer(host, port, backlog) as srv:
        if on_ready is not None:
            on_ready(srv.address)
        if wait_clients:
            srv.wait_for_clients(wait_clients, timeout)
        for msg in frames:
            srv.publish(msg)
            n += 1
    return n


def receive(host: str, port: int, count: int | None = None, timeout: float = 30.0) -> list[Message]:
    """Connect and collect messages until ``count`` arrive or the server closes."""
    out = []
    dec = Decoder()
    with socket.create_connection((host, port), timeout=timeout) as s:
        while count is None or len(out) < count:
            chunk = s.recv(1 << 16)
            if not chunk:
                break
            out += dec.feed(chunk)
    return out
