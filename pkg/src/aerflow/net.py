"""SPIF-style UDP transport: datagrams of packed little-endian event words.

Datagrams carry no header and no timestamps; the receiver stamps events
with a monotonic arrival time. Payloads are 4*k bytes, k words each,
capped at max_words per packet (default 256, i.e. 1024-byte payloads,
safely under common MTUs). UDP is lossy by design: decoding is
best-effort and sources count, rather than raise on, dropped events.
"""

from __future__ import annotations

import socket
import struct
import threading
import time
from typing import Iterable, Iterator

from .errors import ParameterError, RangeError
from .events import Event, Geometry
from .codec import pack_word, unpack_word

DEFAULT_MAX_WORDS = 256
_WORD = struct.Struct("<I")


def parse_endpoint(text: str) -> tuple[str, int]:
    """Split "host:port" into a socket address tuple."""
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ParameterError(f"expected host:port, got {text!r}")
    try:
        return host, int(port)
    except ValueError:
        raise ParameterError(f"invalid port in {text!r}") from None


def encode_packets(events: Iterable[Event], max_words: int = DEFAULT_MAX_WORDS) -> list[bytes]:
    """Greedily pack events, in order, into ceil(n / max_words) payloads."""
    if max_words < 1:
        raise ParameterError(f"max_words must be >= 1: {max_words}")
    packets = []
    batch = []
    for ev in events:
        batch.append(_WORD.pack(pack_word(ev.x, ev.y, ev.p)))
        if len(batch) == max_words:
            packets.append(b"".join(batch))
            batch = []
    if batch:
        packets.append(b"".join(batch))
    return packets


def decode_packet(payload: bytes, arrival: int) -> tuple[list[Event], int]:
    """Unpack a datagram; every event gets t = arrival.

    Returns (events, trailing_bytes) where trailing_bytes counts the bytes
    of an incomplete final word, decoded-and-dropped rather than fatal.
    """
    trailing = len(payload) % 4
    if trailing:
        payload = payload[: len(payload) - trailing]
    events = []
    for (word,) in _WORD.iter_unpack(payload):
        x, y, p = unpack_word(word)
        events.append(Event(x, y, p, arrival))
    return events, trailing


def _monotonic_us() -> int:
    return time.monotonic_ns() // 1000


class UdpSource:
    """Bound UDP socket yielding arrival-stamped events.

    Events outside the geometry are dropped and counted in `drops`.
    Iteration ends when close() is called (possibly from another thread).
    """

    def __init__(self, bind: str | tuple[str, int], geometry: Geometry,
                 recv_timeout: float = 0.2):
        addr = parse_endpoint(bind) if isinstance(bind, str) else bind
        self.geometry = geometry
        self.drops = 0
        self.trailing_bytes = 0
        self._closed = False
        self._last_t = 0
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 20)
        self._sock.bind(addr)
        self._sock.settimeout(recv_timeout)

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def __iter__(self) -> Iterator[Event]:
        contains = self.geometry.contains
        while not self._closed:
            try:
                payload, _ = self._sock.recvfrom(65536)
            except socket.timeout:
                continue
            except OSError:
                break  # socket closed under us
            arrival = max(_monotonic_us(), self._last_t)
            self._last_t = arrival
            events, trailing = decode_packet(payload, arrival)
            self.trailing_bytes += trailing
            for ev in events:
                if contains(ev.x, ev.y):
                    yield ev
                else:
                    self.drops += 1

    def close(self):
        self._closed = True
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class UdpSink:
    """Batching UDP sender: flushes on max_words or flush_interval, whichever
    comes first. Submissions serialize on the internal batch; the timer
    flush runs concurrently."""

    def __init__(self, target: str | tuple[str, int],
                 max_words: int = DEFAULT_MAX_WORDS,
                 flush_interval_us: int = 10_000):
        if max_words < 1:
            raise ParameterError(f"max_words must be >= 1: {max_words}")
        if flush_interval_us <= 0:
            raise ParameterError(f"flush_interval must be positive: {flush_interval_us}")
        self._target = parse_endpoint(target) if isinstance(target, str) else target
        self._max_words = max_words
        self._interval = flush_interval_us / 1e6
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._lock = threading.Lock()
        self._batch: list[bytes] = []
        self._closed = False
        self._wake = threading.Event()
        self.packets_sent = 0
        self.events_sent = 0
        self._timer = threading.Thread(target=self._flush_loop, daemon=True)
        self._timer.start()

    def __call__(self, event: Event):
        word = _WORD.pack(pack_word(event.x, event.y, event.p))
        with self._lock:
            self._batch.append(word)
            if len(self._batch) >= self._max_words:
                self._flush_locked()

    def _flush_locked(self):
        if self._batch:
            payload = b"".join(self._batch)
            self._batch.clear()
            self._sock.sendto(payload, self._target)
            self.packets_sent += 1
            self.events_sent += len(payload) // 4

    def flush(self):
        with self._lock:
            self._flush_locked()

    def _flush_loop(self):
        while not self._wake.wait(self._interval):
            with self._lock:
                if self._closed:
                    return
                self._flush_locked()

    def close(self):
        with self._lock:
            if self._closed:
                return
            self._closed = True
            self._flush_locked()
        self._wake.set()
        self._timer.join()
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
