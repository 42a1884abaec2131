"""Core event data model, deterministic synthetic source, and checksum workload.

Events are immutable 4-tuples (x, y, p, t): pixel column, pixel row,
polarity, and a microsecond timestamp. x is capped at 15 bits and y at
16 bits so an event always fits the packed 32-bit word used by the file
and wire codecs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import ParameterError, RangeError

MASK64 = (1 << 64) - 1
X_LIMIT = 1 << 15
Y_LIMIT = 1 << 16


class Event(NamedTuple):
    x: int
    y: int
    p: bool
    t: int


@dataclass(frozen=True)
class Geometry:
    """Sensor resolution; every routed event must satisfy x < width, y < height."""

    width: int
    height: int

    def __post_init__(self):
        if not 0 < self.width <= X_LIMIT:
            raise RangeError(f"width must be in 1..{X_LIMIT}, got {self.width}")
        if not 0 < self.height <= Y_LIMIT:
            raise RangeError(f"height must be in 1..{Y_LIMIT}, got {self.height}")

    def contains(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height


DVS346 = Geometry(346, 260)


def make_event(x: int, y: int, p: bool, t: int) -> Event:
    """Validate fields and build an immutable event."""
    if not 0 <= x < X_LIMIT:
        raise RangeError(f"x out of range [0, {X_LIMIT}): {x}")
    if not 0 <= y < Y_LIMIT:
        raise RangeError(f"y out of range [0, {Y_LIMIT}): {y}")
    if t < 0:
        raise RangeError(f"t must be non-negative: {t}")
    return Event(int(x), int(y), bool(p), int(t))


def checksum(events: Iterable[Event]) -> int:
    """Wrapping 64-bit sum of x + y over all events (order independent)."""
    return sum(e.x + e.y for e in events) & MASK64


class ChecksumSink:
    """Per-event consumer accumulating the coordinate checksum."""

    __slots__ = ("_acc", "count")

    def __init__(self):
        self._acc = 0
        self.count = 0

    def __call__(self, event: Event):
        self._acc += event.x + event.y
        self.count += 1

    @property
    def value(self) -> int:
        return self._acc & MASK64


# Counter-based SplitMix64. Draw k (0-based) of the stream for seed s is
# mix(s + (k + 1) * GOLDEN) with all arithmetic mod 2^64; event i consumes
# draws 3i (x), 3i+1 (y), 3i+2 (polarity). The constants are the reference
# SplitMix64 ones, so any language can regenerate fixtures bit-exactly.
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(state: np.ndarray) -> np.ndarray:
    z = state.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


def synthetic_arrays(
    seed: int, n: int, geometry: Geometry, rate: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized synthetic source; returns (x, y, p, t) arrays of length n.

    Coordinates are uniform within the geometry, polarity is Bernoulli(0.5),
    and timestamps are spaced so n events span n/rate seconds.
    """
    if n < 0:
        raise ParameterError(f"n must be non-negative: {n}")
    rate_int = int(round(rate))
    if rate_int <= 0:
        raise ParameterError(f"rate must be positive: {rate}")
    if n == 0:
        u64 = np.zeros(0, dtype=np.uint64)
        return u64.copy(), u64.copy(), np.zeros(0, dtype=bool), u64.copy()
    idx = np.arange(n, dtype=np.uint64)
    base = np.uint64(seed & MASK64)
    dx = _splitmix64(base + (idx * np.uint64(3) + np.uint64(1)) * _GOLDEN)
    dy = _splitmix64(base + (idx * np.uint64(3) + np.uint64(2)) * _GOLDEN)
    dp = _splitmix64(base + (idx * np.uint64(3) + np.uint64(3)) * _GOLDEN)
    x = dx % np.uint64(geometry.width)
    y = dy % np.uint64(geometry.height)
    p = (dp & np.uint64(1)).astype(bool)
    t = idx * np.uint64(1_000_000) // np.uint64(rate_int)
    return x, y, p, t


def synthetic_stream(
    seed: int, n: int, geometry: Geometry, rate: float, chunk: int = 65536
) -> Iterator[Event]:
    """Deterministic event stream: same arguments, same events, every call."""
    if chunk <= 0:
        raise ParameterError(f"chunk must be positive: {chunk}")
    if n < 0:
        raise ParameterError(f"n must be non-negative: {n}")
    if int(round(rate)) <= 0:
        raise ParameterError(f"rate must be positive: {rate}")
    rate_int = int(round(rate))
    base = np.uint64(seed & MASK64)
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        idx = np.arange(start, start + m, dtype=np.uint64)
        dx = _splitmix64(base + (idx * np.uint64(3) + np.uint64(1)) * _GOLDEN)
        dy = _splitmix64(base + (idx * np.uint64(3) + np.uint64(2)) * _GOLDEN)
        dp = _splitmix64(base + (idx * np.uint64(3) + np.uint64(3)) * _GOLDEN)
        xs = (dx % np.uint64(geometry.width)).tolist()
        ys = (dy % np.uint64(geometry.height)).tolist()
        ps = (dp & np.uint64(1)).astype(bool).tolist()
        ts = (idx * np.uint64(1_000_000) // np.uint64(rate_int)).tolist()
        yield from itertools.starmap(Event, zip(xs, ys, ps, ts))
