"""Dense frame accumulation over time windows and the instrumented
host-to-device transfer boundary.

The "device" is an in-process arena behind an explicit byte- and
time-counted copy, so the dense-versus-sparse transfer comparison is
reproducible on any machine. Two paths cross the boundary:

  * dense: the full width*height grid of 32-bit cells is copied
    (width*height*4 bytes per frame, regardless of occupancy);
  * sparse: only the packed 32-bit event words are copied (4*n bytes)
    and the grid is scattered together on the device side.

Both paths yield bit-identical device frames for the same window.
"""

from __future__ import annotations

import csv
import threading
import time
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .codec import pack_words_array
from .errors import OrderingError, ParameterError, RangeError, StateError
from .events import Event, Geometry

MODES = ("count", "binary")
CELL_BYTES = 4
WORD_BYTES = 4


def _check_mode(mode: str):
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")


@dataclass
class Frame:
    """Dense accumulation of one time window; values is a read-only
    (height, width) uint32 grid."""

    geometry: Geometry
    window_start: int
    window_end: int
    values: np.ndarray
    mode: str = "count"

    @property
    def total(self) -> int:
        return int(self.values.sum())


@dataclass
class WindowBatch:
    """Raw per-window event columns, before densification."""

    geometry: Geometry
    window_index: int
    window_start: int
    window_end: int
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray

    def __len__(self) -> int:
        return len(self.x)


def _scatter(geometry: Geometry, x: np.ndarray, y: np.ndarray, mode: str) -> np.ndarray:
    h, w = geometry.height, geometry.width
    if not len(x):
        return np.zeros((h, w), dtype=np.uint32)
    counts = np.bincount(y * w + x, minlength=h * w).astype(np.uint32)
    grid = counts.reshape(h, w)
    if mode == "binary":
        np.minimum(grid, 1, out=grid)
    return grid


def frame_from_batch(batch: WindowBatch, mode: str = "count") -> Frame:
    _check_mode(mode)
    values = _scatter(batch.geometry, batch.x, batch.y, mode)
    values.flags.writeable = False
    return Frame(batch.geometry, batch.window_start, batch.window_end, values, mode)


def accumulate(events: Sequence[Event], geometry: Geometry, mode: str = "count",
               window: Optional[tuple[int, int]] = None) -> Frame:
    """Densify a finite event sequence into one frame.

    Polarity is ignored; both polarities accumulate into the same cell.
    Without an explicit window the bounds are derived from the events.
    """
    _check_mode(mode)
    events = list(events)
    for ev in events:
        if not geometry.contains(ev.x, ev.y):
            raise RangeError(
                f"event ({ev.x}, {ev.y}) outside geometry "
                f"{geometry.width}x{geometry.height}"
            )
    if window is None:
        if events:
            ts = [ev.t for ev in events]
            window = (min(ts), max(ts) + 1)
        else:
            window = (0, 0)
    else:
        for ev in events:
            if not window[0] <= ev.t < window[1]:
                raise ParameterError(
                    f"event at t={ev.t} outside window [{window[0]}, {window[1]})"
                )
    x = np.fromiter((ev.x for ev in events), dtype=np.int64, count=len(events))
    y = np.fromiter((ev.y for ev in events), dtype=np.int64, count=len(events))
    values = _scatter(geometry, x, y, mode)
    values.flags.writeable = False
    return Frame(geometry, window[0], window[1], values, mode)


class TimeWindower:
    """Push-style partition of an ordered event stream into half-open
    windows [t0 + k*dt, t0 + (k+1)*dt). Empty windows are still emitted."""

    _NONE_CLOSED: tuple = ()

    def __init__(self, geometry: Geometry, dt: int):
        if dt <= 0:
            raise ParameterError(f"dt must be positive: {dt}")
        self.geometry = geometry
        self.dt = int(dt)
        self._width = geometry.width
        self._height = geometry.height
        self._t0: Optional[int] = None
        self._next_boundary = -1  # first event always takes the slow path
        self._last_t = 0
        self._index = 0
        self._fresh_lists()

    def _fresh_lists(self):
        self._xs: list[int] = []
        self._ys: list[int] = []
        self._ps: list[bool] = []
        self._xa = self._xs.append
        self._ya = self._ys.append
        self._pa = self._ps.append

    def _close_window(self) -> WindowBatch:
        start = self._t0 + self._index * self.dt
        batch = WindowBatch(
            self.geometry, self._index, start, start + self.dt,
            np.asarray(self._xs, dtype=np.int64),
            np.asarray(self._ys, dtype=np.int64),
            np.asarray(self._ps, dtype=bool),
        )
        self._fresh_lists()
        self._index += 1
        self._next_boundary = self._t0 + (self._index + 1) * self.dt
        return batch

    def push(self, ev: Event) -> Sequence[WindowBatch]:
        """Add one event; returns the windows it closed (usually none)."""
        t = ev.t
        if t >= self._next_boundary:
            return self._push_slow(ev)
        if t < self._last_t:
            raise OrderingError(f"timestamp {t} decreases after {self._last_t}")
        self._last_t = t
        x = ev.x
        y = ev.y
        if 0 <= x < self._width and 0 <= y < self._height:
            self._xa(x)
            self._ya(y)
            self._pa(ev.p)
            return self._NONE_CLOSED
        raise RangeError(
            f"event ({x}, {y}) outside geometry {self._width}x{self._height}"
        )

    def _push_slow(self, ev: Event) -> Sequence[WindowBatch]:
        # first event of the stream, or one that closes >= 1 window
        t = ev.t
        if t < self._last_t:
            raise OrderingError(f"timestamp {t} decreases after {self._last_t}")
        self._last_t = t
        if not (0 <= ev.x < self._width and 0 <= ev.y < self._height):
            raise RangeError(
                f"event ({ev.x}, {ev.y}) outside geometry "
                f"{self._width}x{self._height}"
            )
        if self._t0 is None:
            self._t0 = t
            self._next_boundary = t + self.dt
            closed: Sequence[WindowBatch] = self._NONE_CLOSED
        else:
            closed = []
            while t >= self._next_boundary:
                closed.append(self._close_window())
        self._xa(ev.x)
        self._ya(ev.y)
        self._pa(ev.p)
        return closed

    def finish(self) -> Sequence[WindowBatch]:
        """Close the final (partial) window; no-op for an empty stream."""
        if self._t0 is None:
            return self._NONE_CLOSED
        return (self._close_window(),)

    @property
    def first_timestamp(self) -> Optional[int]:
        return self._t0

    @property
    def last_timestamp(self) -> int:
        return self._last_t


def window_batches(stream: Iterable[Event], dt: int,
                   geometry: Geometry) -> Iterator[WindowBatch]:
    windower = TimeWindower(geometry, dt)
    for ev in stream:
        yield from windower.push(ev)
    yield from windower.finish()


def window_by_time(stream: Iterable[Event], dt: int, geometry: Geometry,
                   mode: str = "count") -> Iterator[Frame]:
    """Accumulate an ordered stream into a stream of dense frames."""
    _check_mode(mode)
    for batch in window_batches(stream, dt, geometry):
        yield frame_from_batch(batch, mode)


@dataclass
class LedgerRow:
    window_index: int
    path: str
    bytes: int
    copy_time_ns: int
    frame_events: int


@dataclass
class TransferLedger:
    """Exact (not sampled) accounting of boundary crossings."""

    bytes_dense: int = 0
    bytes_sparse: int = 0
    copy_time_ns: int = 0
    frames_delivered: int = 0
    rows: list[LedgerRow] = field(default_factory=list)

    def write_csv(self, stream: IO[str]):
        writer = csv.writer(stream)
        writer.writerow(["window_index", "path", "bytes", "copy_time_ns", "frame_events"])
        for row in self.rows:
            writer.writerow([row.window_index, row.path, row.bytes,
                             row.copy_time_ns, row.frame_events])


class DeviceBoundary:
    """Instrumented stand-in for a host-to-accelerator memory boundary."""

    def __init__(self):
        self.ledger = TransferLedger()
        self._lock = threading.Lock()
        self._open = True

    def close(self):
        self._open = False

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _record(self, path: str, window_index: int, nbytes: int,
                copy_ns: int, frame_events: int):
        with self._lock:
            led = self.ledger
            if path == "dense":
                led.bytes_dense += nbytes
            else:
                led.bytes_sparse += nbytes
            led.copy_time_ns += copy_ns
            led.frames_delivered += 1
            led.rows.append(LedgerRow(window_index, path, nbytes, copy_ns, frame_events))

    def _require_open(self):
        if not self._open:
            raise StateError("device boundary is closed")


def transfer_dense(frame: Frame, boundary: DeviceBoundary,
                   window_index: int = -1,
                   n_events: Optional[int] = None) -> Frame:
    """Copy a host-built frame across the boundary as a full grid."""
    boundary._require_open()
    start = time.perf_counter_ns()
    device_values = frame.values.copy()
    copy_ns = time.perf_counter_ns() - start
    device_values.flags.writeable = False
    nbytes = frame.geometry.width * frame.geometry.height * CELL_BYTES
    if n_events is None:
        n_events = frame.total
    boundary._record("dense", window_index, nbytes, copy_ns, n_events)
    return Frame(frame.geometry, frame.window_start, frame.window_end,
                 device_values, frame.mode)


def transfer_sparse(events: Union[Sequence[Event], WindowBatch],
                    boundary: DeviceBoundary, geometry: Optional[Geometry] = None,
                    mode: str = "count",
                    window: tuple[int, int] = (0, 0),
                    window_index: int = -1) -> Frame:
    """Copy packed event words across the boundary and scatter on the
    device side; yields the same frame the dense path would."""
    boundary._require_open()
    _check_mode(mode)
    if isinstance(events, WindowBatch):
        batch = events
        geometry = batch.geometry
        window = (batch.window_start, batch.window_end)
        window_index = batch.window_index
        x, y, p = batch.x, batch.y, batch.p
    else:
        if geometry is None:
            raise ParameterError("geometry required when passing raw events")
        events = list(events)
        x = np.fromiter((ev.x for ev in events), dtype=np.int64, count=len(events))
        y = np.fromiter((ev.y for ev in events), dtype=np.int64, count=len(events))
        p = np.fromiter((ev.p for ev in events), dtype=bool, count=len(events))
        if len(x) and (int(x.max()) >= geometry.width or int(y.max()) >= geometry.height):
            raise RangeError("event outside geometry")
    words = pack_words_array(x, y, p)
    start = time.perf_counter_ns()
    device_words = words.copy()
    copy_ns = time.perf_counter_ns() - start
    # device side: unpack and scatter-add
    dx = (device_words >> np.uint32(16)) & np.uint32(0x7FFF)
    dy = device_words & np.uint32(0xFFFF)
    values = _scatter(geometry, dx.astype(np.int64), dy.astype(np.int64), mode)
    values.flags.writeable = False
    nbytes = WORD_BYTES * len(device_words)
    boundary._record("sparse", window_index, nbytes, copy_ns, len(device_words))
    return Frame(geometry, window[0], window[1], values, mode)


def paced_playback(events: Iterable[Event], speed: float = 1.0,
                   quantum_us: int = 1000) -> Iterator[Event]:
    """Release events no earlier than wall-clock (t - t0) / speed after start.

    Releases are quantized: when the stream runs ahead of the wall clock it
    sleeps one quantum past the next event's due time and then releases the
    whole burst that has become due, keeping the per-event cost near zero.
    Events are never released early; they may be up to one quantum late.
    """
    if speed <= 0:
        raise ParameterError(f"speed must be positive: {speed}")
    if quantum_us < 0:
        raise ParameterError(f"quantum_us must be non-negative: {quantum_us}")
    it = iter(events)
    try:
        first = next(it)
    except StopIteration:
        return
    monotonic = time.monotonic_ns
    sleep = time.sleep
    start_ns = monotonic()
    t0 = first.t
    scale = 1000.0 / speed  # microseconds of stream time to nanoseconds of wall time
    free_t = t0  # stream time already past due as of the last clock read
    yield first
    for ev in it:
        t = ev.t
        if t > free_t:
            elapsed_us = (monotonic() - start_ns) / scale
            if t - t0 > elapsed_us:
                target = t + quantum_us
                lag = start_ns + int((target - t0) * scale) - monotonic()
                if lag > 0:
                    sleep(lag / 1e9)
                free_t = target
            else:
                free_t = t0 + int(elapsed_us)
        yield ev
