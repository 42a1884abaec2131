"""Bit-exact binary file format, packed event word, and a text codec.

Packed 32-bit event word (bit 31 most significant), shared between file
records and UDP datagrams:

    bit  31      p (1 = positive polarity)
    bits 30..16  x (15 bits)
    bits 15..0   y (16 bits)

AERF file layout, everything little-endian:

    offset 0   magic    4 bytes  ASCII "AERF"
    offset 4   version  1 byte   = 1
    offset 5   flags    1 byte   = 0
    offset 6   width    u16
    offset 8   height   u16
    offset 10  reserved 2 bytes  = 0
    offset 12  records, 12 bytes each: t as u64, then the packed word

Records must be non-decreasing in t. Text records are "t,x,y,p" lines
with p in {0,1}, for stdout sinks and debugging.
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .errors import (
    FormatError,
    OrderingError,
    ParseError,
    RangeError,
    TruncationError,
    VersionError,
)
from .events import Event, Geometry, X_LIMIT, Y_LIMIT, make_event

MAGIC = b"AERF"
VERSION = 1
HEADER_STRUCT = struct.Struct("<4sBBHH2s")
RECORD_STRUCT = struct.Struct("<QI")
HEADER_SIZE = HEADER_STRUCT.size
RECORD_SIZE = RECORD_STRUCT.size

_P_BIT = 1 << 31
_X_SHIFT = 16
_Y_MASK = 0xFFFF
_X_MASK = 0x7FFF


def pack_word(x: int, y: int, p: bool) -> int:
    """Pack coordinates and polarity into the shared 32-bit word."""
    if not 0 <= x < X_LIMIT:
        raise RangeError(f"x out of packing range [0, {X_LIMIT}): {x}")
    if not 0 <= y < Y_LIMIT:
        raise RangeError(f"y out of packing range [0, {Y_LIMIT}): {y}")
    return (_P_BIT if p else 0) | (x << _X_SHIFT) | y


def unpack_word(word: int) -> tuple[int, int, bool]:
    """Inverse of pack_word; total over all 32-bit values."""
    return (word >> _X_SHIFT) & _X_MASK, word & _Y_MASK, bool(word & _P_BIT)


def pack_words_array(x: np.ndarray, y: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Vectorized pack_word over coordinate arrays; returns uint32 words."""
    if x.size and (int(x.max()) >= X_LIMIT or int(y.max()) >= Y_LIMIT):
        raise RangeError("coordinate out of packing range")
    words = x.astype(np.uint32) << np.uint32(_X_SHIFT)
    words |= y.astype(np.uint32)
    words |= np.where(p, np.uint32(_P_BIT), np.uint32(0))
    return words


def _encode_header(geometry: Geometry) -> bytes:
    return HEADER_STRUCT.pack(MAGIC, VERSION, 0, geometry.width, geometry.height, b"\x00\x00")


class FileWriter:
    """Push-style AERF writer: header on construction, one record per write."""

    def __init__(self, stream: BinaryIO, geometry: Geometry):
        self._stream = stream
        self._geometry = geometry
        self._last_t = -1
        self._pending: list[bytes] = []
        self.byte_count = 0
        stream.write(_encode_header(geometry))
        self.byte_count += HEADER_SIZE

    def write(self, event: Event):
        if event.t < self._last_t:
            raise OrderingError(
                f"timestamp {event.t} decreases after {self._last_t}"
            )
        if not self._geometry.contains(event.x, event.y):
            raise RangeError(
                f"event ({event.x}, {event.y}) outside geometry "
                f"{self._geometry.width}x{self._geometry.height}"
            )
        self._last_t = event.t
        self._pending.append(
            RECORD_STRUCT.pack(event.t, pack_word(event.x, event.y, event.p))
        )
        self.byte_count += RECORD_SIZE
        if len(self._pending) >= 4096:
            self.flush()

    def flush(self):
        if self._pending:
            self._stream.write(b"".join(self._pending))
            self._pending.clear()

    def close(self):
        self.flush()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_file(stream: BinaryIO, geometry: Geometry, events: Iterable[Event]) -> int:
    """Write header plus one record per event; returns total bytes written."""
    writer = FileWriter(stream, geometry)
    for event in events:
        writer.write(event)
    writer.close()
    return writer.byte_count


def write_file_arrays(
    stream: BinaryIO,
    geometry: Geometry,
    x: np.ndarray,
    y: np.ndarray,
    p: np.ndarray,
    t: np.ndarray,
) -> int:
    """Vectorized write_file over column arrays (used for large fixtures)."""
    n = len(t)
    if n and np.any(np.diff(t.astype(np.int64)) < 0):
        raise OrderingError("timestamps decrease")
    if n and (int(x.max()) >= geometry.width or int(y.max()) >= geometry.height):
        raise RangeError("event outside geometry")
    stream.write(_encode_header(geometry))
    rec = np.zeros(n, dtype=np.dtype([("t", "<u8"), ("w", "<u4")]))
    rec["t"] = t.astype(np.uint64)
    rec["w"] = pack_words_array(x, y, p)
    stream.write(rec.tobytes())
    return HEADER_SIZE + RECORD_SIZE * n


def read_header(stream: BinaryIO) -> Geometry:
    raw = stream.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise TruncationError(f"file shorter than {HEADER_SIZE}-byte header", 0)
    magic, version, _flags, width, height, _reserved = HEADER_STRUCT.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionError(f"unsupported version {version}, expected {VERSION}")
    if width == 0 or height == 0:
        raise FormatError(f"invalid geometry {width}x{height}")
    return Geometry(width, height)


def read_file(stream: BinaryIO) -> tuple[Geometry, Iterator[Event]]:
    """Validate the header, then lazily yield events in file order.

    A trailing partial record raises TruncationError carrying the byte
    offset where the partial record starts.
    """
    geometry = read_header(stream)

    def records() -> Iterator[Event]:
        offset = HEADER_SIZE
        while True:
            chunk = stream.read(RECORD_SIZE * 4096)
            if not chunk:
                return
            full, extra = divmod(len(chunk), RECORD_SIZE)
            if extra:
                tail = stream.read(RECORD_SIZE - extra)
                if len(tail) < RECORD_SIZE - extra:
                    raise TruncationError(
                        f"truncated record at byte offset {offset + full * RECORD_SIZE}",
                        offset + full * RECORD_SIZE,
                    )
                chunk += tail
                full += 1
            for t, word in RECORD_STRUCT.iter_unpack(chunk):
                yield Event((word >> 16) & 0x7FFF, word & 0xFFFF,
                            word >= 0x80000000, t)
            offset += len(chunk)

    return geometry, records()


def encode_text(event: Event) -> str:
    """Format an event as a "t,x,y,p" line."""
    return f"{event.t},{event.x},{event.y},{1 if event.p else 0}\n"


def decode_text(line: str) -> Event:
    """Inverse of encode_text; ParseError carries the offending field index."""
    fields = line.rstrip("\n").split(",")
    if len(fields) != 4:
        raise ParseError(f"expected 4 comma-separated fields, got {len(fields)}", 0)
    values = []
    for i, field in enumerate(fields):
        try:
            values.append(int(field))
        except ValueError:
            raise ParseError(f"field {i} is not an integer: {field!r}", i) from None
    t, x, y, p = values
    if p not in (0, 1):
        raise ParseError(f"polarity must be 0 or 1, got {p}", 3)
    if t < 0:
        raise ParseError(f"timestamp must be non-negative, got {t}", 0)
    return make_event(x, y, p == 1, t)
