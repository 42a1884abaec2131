"""Benchmark harnesses: runtime throughput comparison and the
four-scenario frame transfer experiment.

The throughput benchmark feeds a cached in-memory event array through a
checksum pipeline under every runtime kind, verifying each run against
the precomputed oracle checksum. Cooperative runs ignore buffer sizes,
so they execute once per worker count and are cross-referenced by the
summary instead of re-run.

The frame benchmark replays an event file with timestamp pacing through
one of four scenarios (locked/cooperative transport x dense/sparse
transfer), pushes every window through the edge detector, and reports
the transfer ledger.
"""

from __future__ import annotations

import csv
import hashlib
import statistics
import time
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, Optional, Sequence

import numpy as np

from .codec import read_file, write_file_arrays
from .edge import EdgeDetector, LifParams
from .errors import AggregationError, ChecksumMismatchError, ParameterError
from .events import (
    DVS346,
    MASK64,
    ChecksumSink,
    Event,
    Geometry,
    synthetic_arrays,
    synthetic_stream,
)
from .frames import (
    DeviceBoundary,
    TimeWindower,
    frame_from_batch,
    paced_playback,
    transfer_dense,
    transfer_sparse,
)
from .runtime import BASELINE, BUFFERED, COOPERATIVE, RunReport, RuntimeKind, run_pipeline

Progress = Optional[Callable[[str], None]]

# Default sweep. Buffer sizes and the 128 repetitions follow the original
# protocol; event counts span the same x64 range but are sized for a
# per-event interpreted hot path.
DEFAULT_EVENT_COUNTS = (4096, 16384, 65536, 262144)
DEFAULT_BUFFER_SIZES = (256, 1024, 4096)
DEFAULT_WORKER_COUNTS = (1, 2, 4)
DEFAULT_REPETITIONS = 128


@dataclass(frozen=True)
class ThroughputConfig:
    event_counts: Sequence[int] = DEFAULT_EVENT_COUNTS
    buffer_sizes: Sequence[int] = DEFAULT_BUFFER_SIZES
    worker_counts: Sequence[int] = DEFAULT_WORKER_COUNTS
    repetitions: int = DEFAULT_REPETITIONS
    seed: int = 42
    geometry: Geometry = DVS346
    rate: float = 1e6

    def __post_init__(self):
        if self.repetitions < 1:
            raise ParameterError(f"repetitions must be >= 1: {self.repetitions}")
        for name, values in (("event_counts", self.event_counts),
                             ("buffer_sizes", self.buffer_sizes),
                             ("worker_counts", self.worker_counts)):
            if not values or any(v < 1 for v in values):
                raise ParameterError(f"{name} must be non-empty and all >= 1")


@dataclass
class BenchRecord:
    runtime_kind: str
    buffer_size: Optional[int]
    workers: int
    event_count: int
    repetition_index: int
    wall_time_ns: int
    checksum: int
    checksum_ok: bool


def _oracle_checksum(seed: int, n: int, geometry: Geometry, rate: float) -> int:
    x, y, _, _ = synthetic_arrays(seed, n, geometry, rate)
    return int((x + y).sum(dtype=np.uint64)) & MASK64


def _run_cell(events: list[Event], kind: RuntimeKind, oracle: int, count: int,
              repetitions: int, records: list[BenchRecord]):
    cell = (f"kind={kind.kind} buffer={kind.buffer_size} "
            f"workers={kind.workers} n={count}")
    for rep in range(repetitions + 1):  # repetition 0 is an untimed warm-up
        sink = ChecksumSink()
        report = run_pipeline(events, [], sink, kind)
        ok = sink.value == oracle
        if not ok:
            raise ChecksumMismatchError(
                f"checksum mismatch in cell [{cell} rep={rep}]: "
                f"got {sink.value}, expected {oracle}"
            )
        if rep == 0:
            continue
        records.append(BenchRecord(
            kind.kind, kind.buffer_size, kind.workers, count, rep - 1,
            int(report.wall_time * 1e9), sink.value, ok,
        ))


def run_throughput(config: ThroughputConfig,
                   progress: Progress = None) -> list[BenchRecord]:
    """Run the full sweep strictly sequentially; one record per timed rep."""
    records: list[BenchRecord] = []
    for count in config.event_counts:
        events = list(synthetic_stream(config.seed, count, config.geometry, config.rate))
        oracle = _oracle_checksum(config.seed, count, config.geometry, config.rate)
        if progress:
            progress(f"n={count}: baseline")
        _run_cell(events, RuntimeKind.baseline(), oracle, count,
                  config.repetitions, records)
        for buffer_size in config.buffer_sizes:
            for workers in config.worker_counts:
                if progress:
                    progress(f"n={count}: buffered_locked buffer={buffer_size} "
                             f"workers={workers}")
                kind = RuntimeKind.buffered_locked(buffer_size, workers)
                _run_cell(events, kind, oracle, count, config.repetitions, records)
        for workers in config.worker_counts:
            # one cooperative series per worker count; buffer sizes do not apply
            if progress:
                progress(f"n={count}: cooperative workers={workers}")
            kind = RuntimeKind.cooperative(workers)
            _run_cell(events, kind, oracle, count, config.repetitions, records)
    return records


@dataclass
class SpeedupRow:
    event_count: int
    baseline_mean_ns: Optional[float]
    baseline_min_ns: Optional[int]
    baseline_max_ns: Optional[int]
    buffered_mean_ns: float
    buffered_min_ns: int
    buffered_max_ns: int
    cooperative_mean_ns: float
    cooperative_min_ns: int
    cooperative_max_ns: int
    speedup_mean: float
    speedup_vs_min: float
    speedup_vs_max: float


def summarize(records: Iterable[BenchRecord]) -> list[SpeedupRow]:
    """Per event count: mean/min/max wall time per kind, and the relative
    speedup of cooperative versus the mean buffered runtime, bounded by
    the speedups versus the fastest and slowest buffered runs."""
    by_count: dict[int, dict[str, list[int]]] = {}
    for rec in records:
        by_count.setdefault(rec.event_count, {}).setdefault(
            rec.runtime_kind, []).append(rec.wall_time_ns)
    missing = []
    for count in sorted(by_count):
        for kind in (BUFFERED, COOPERATIVE):
            if kind not in by_count[count]:
                missing.append(f"(event_count={count}, {kind})")
    if missing:
        raise AggregationError(
            f"incomplete records, missing cells: {', '.join(missing)}", missing
        )
    rows = []
    for count in sorted(by_count):
        kinds = by_count[count]
        buf = kinds[BUFFERED]
        coop = kinds[COOPERATIVE]
        base = kinds.get(BASELINE)
        mean_buf = statistics.fmean(buf)
        mean_coop = statistics.fmean(coop)
        rows.append(SpeedupRow(
            event_count=count,
            baseline_mean_ns=statistics.fmean(base) if base else None,
            baseline_min_ns=min(base) if base else None,
            baseline_max_ns=max(base) if base else None,
            buffered_mean_ns=mean_buf,
            buffered_min_ns=min(buf),
            buffered_max_ns=max(buf),
            cooperative_mean_ns=mean_coop,
            cooperative_min_ns=min(coop),
            cooperative_max_ns=max(coop),
            speedup_mean=mean_buf / mean_coop,
            speedup_vs_min=min(buf) / mean_coop,
            speedup_vs_max=max(buf) / mean_coop,
        ))
    return rows


RECORD_COLUMNS = ["runtime_kind", "buffer_size", "workers", "event_count",
                  "repetition_index", "wall_time_ns", "checksum", "checksum_ok"]

SUMMARY_COLUMNS = ["event_count",
                   "baseline_mean_ns", "baseline_min_ns", "baseline_max_ns",
                   "buffered_mean_ns", "buffered_min_ns", "buffered_max_ns",
                   "cooperative_mean_ns", "cooperative_min_ns", "cooperative_max_ns",
                   "speedup_mean", "speedup_vs_min", "speedup_vs_max"]


def write_records_csv(records: Iterable[BenchRecord], stream: IO[str]):
    writer = csv.writer(stream)
    writer.writerow(RECORD_COLUMNS)
    for r in records:
        writer.writerow([r.runtime_kind, "" if r.buffer_size is None else r.buffer_size,
                         r.workers, r.event_count, r.repetition_index,
                         r.wall_time_ns, r.checksum, int(r.checksum_ok)])


def read_records_csv(stream: IO[str]) -> list[BenchRecord]:
    reader = csv.DictReader(stream)
    records = []
    for row in reader:
        records.append(BenchRecord(
            row["runtime_kind"],
            int(row["buffer_size"]) if row["buffer_size"] else None,
            int(row["workers"]), int(row["event_count"]),
            int(row["repetition_index"]), int(row["wall_time_ns"]),
            int(row["checksum"]), row["checksum_ok"] == "1",
        ))
    return records


def write_summary_csv(rows: Iterable[SpeedupRow], stream: IO[str]):
    writer = csv.writer(stream)
    writer.writerow(SUMMARY_COLUMNS)
    for r in rows:
        blank = lambda v: "" if v is None else v
        writer.writerow([r.event_count,
                         blank(r.baseline_mean_ns), blank(r.baseline_min_ns),
                         blank(r.baseline_max_ns),
                         r.buffered_mean_ns, r.buffered_min_ns, r.buffered_max_ns,
                         r.cooperative_mean_ns, r.cooperative_min_ns,
                         r.cooperative_max_ns,
                         r.speedup_mean, r.speedup_vs_min, r.speedup_vs_max])


SCENARIOS = ("locked_dense", "cooperative_dense", "locked_sparse", "cooperative_sparse")


@dataclass
class FrameBenchReport:
    scenario: str
    frames_processed: int
    events_total: int
    bytes_copied: int
    copy_time_ns: int
    copy_time_fraction: float
    wall_time: float
    frames_per_second: float
    spikes_total: int
    spike_digest: str
    file_span_us: int
    boundary: DeviceBoundary = field(repr=False, default=None)


class _ScenarioSink:
    """Windowing consumer: free-runs on whatever the transport delivers,
    carries each completed window across the boundary, runs the detector."""

    def __init__(self, geometry: Geometry, dt: int, sparse: bool, mode: str,
                 boundary: DeviceBoundary, detector: EdgeDetector):
        self.windower = TimeWindower(geometry, dt)
        self._push = self.windower.push
        self.sparse = sparse
        self.mode = mode
        self.boundary = boundary
        self.detector = detector
        self.digest = hashlib.sha256()
        self.frames_processed = 0
        self.spikes_total = 0

    def __call__(self, ev: Event):
        closed = self._push(ev)
        if closed:
            for batch in closed:
                self._process(batch)

    def _process(self, batch):
        if self.sparse:
            device_frame = transfer_sparse(batch, self.boundary, mode=self.mode)
        else:
            host_frame = frame_from_batch(batch, self.mode)
            device_frame = transfer_dense(host_frame, self.boundary,
                                          batch.window_index, n_events=len(batch))
        spikes = self.detector.step(device_frame)
        self.digest.update(np.packbits(spikes).tobytes())
        self.frames_processed += 1
        self.spikes_total += int(spikes.sum())

    def finish(self):
        for batch in self.windower.finish():
            self._process(batch)


def run_frame_bench(path: str, scenario: str, dt: int = 1000, speed: float = 1.0,
                    mode: str = "count", buffer_size: int = 1024,
                    lif: Optional[LifParams] = None,
                    kernel=None) -> FrameBenchReport:
    if scenario not in SCENARIOS:
        raise ParameterError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    transport, transfer = scenario.split("_")
    if transport == "locked":
        kind = RuntimeKind.buffered_locked(buffer_size, workers=1)
    else:
        kind = RuntimeKind.cooperative(workers=1)
    params = lif or LifParams(dt=float(dt))
    boundary = DeviceBoundary()
    with open(path, "rb") as fh:
        geometry, events = read_file(fh)
        detector = EdgeDetector(geometry, params, kernel)
        sink = _ScenarioSink(geometry, dt, transfer == "sparse", mode,
                             boundary, detector)
        start = time.perf_counter()
        report: RunReport = run_pipeline(paced_playback(events, speed), [], sink, kind)
        sink.finish()
        wall = time.perf_counter() - start
    led = boundary.ledger
    t0 = sink.windower.first_timestamp
    span = (sink.windower.last_timestamp - t0) if t0 is not None else 0
    wall_ns = max(int(wall * 1e9), 1)
    return FrameBenchReport(
        scenario=scenario,
        frames_processed=sink.frames_processed,
        events_total=report.events_in,
        bytes_copied=led.bytes_dense + led.bytes_sparse,
        copy_time_ns=led.copy_time_ns,
        copy_time_fraction=led.copy_time_ns / wall_ns,
        wall_time=wall,
        frames_per_second=sink.frames_processed / wall,
        spikes_total=sink.spikes_total,
        spike_digest=sink.digest.hexdigest(),
        file_span_us=span,
        boundary=boundary,
    )


FRAME_REPORT_COLUMNS = ["scenario", "frames_processed", "events_total",
                        "bytes_copied", "copy_time_ns", "copy_time_fraction",
                        "wall_time_s", "frames_per_second", "spikes_total",
                        "spike_digest", "file_span_us"]


def write_frame_reports_csv(reports: Iterable[FrameBenchReport], stream: IO[str]):
    writer = csv.writer(stream)
    writer.writerow(FRAME_REPORT_COLUMNS)
    for r in reports:
        writer.writerow([r.scenario, r.frames_processed, r.events_total,
                         r.bytes_copied, r.copy_time_ns,
                         f"{r.copy_time_fraction:.6f}", f"{r.wall_time:.6f}",
                         f"{r.frames_per_second:.3f}", r.spikes_total,
                         r.spike_digest, r.file_span_us])


def write_synthetic_fixture(path: str, seed: int, n: int, geometry: Geometry,
                            rate: float) -> int:
    """Write a deterministic AERF fixture; returns the byte count."""
    x, y, p, t = synthetic_arrays(seed, n, geometry, rate)
    with open(path, "wb") as fh:
        return write_file_arrays(fh, geometry, x, y, p, t)


def plot_throughput(records: Sequence[BenchRecord], rows: Sequence[SpeedupRow],
                    outdir: str) -> list[str]:
    """Render runtime and speedup charts from throughput results."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import os

    os.makedirs(outdir, exist_ok=True)
    counts = [r.event_count for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    series = {BASELINE: ("baseline", "0.3", "--"),
              BUFFERED: ("buffered locked", "tab:blue", "-"),
              COOPERATIVE: ("cooperative", "purple", "-")}
    for kind, (label, color, style) in series.items():
        per_count = {}
        for rec in records:
            if rec.runtime_kind == kind:
                per_count.setdefault(rec.event_count, []).append(rec.wall_time_ns)
        if not per_count:
            continue
        xs = sorted(per_count)
        ys = [statistics.fmean(per_count[c]) / 1e6 for c in xs]
        lo = [min(per_count[c]) / 1e6 for c in xs]
        hi = [max(per_count[c]) / 1e6 for c in xs]
        ax1.plot(xs, ys, style, color=color, label=label)
        ax1.fill_between(xs, lo, hi, color=color, alpha=0.15)
    ax1.set_xscale("log", base=2)
    ax1.set_yscale("log")
    ax1.set_xlabel("events per run")
    ax1.set_ylabel("runtime (ms)")
    ax1.legend()
    ax1.set_title("Runtime per kind")
    ax2.plot(counts, [r.speedup_mean for r in rows], color="purple",
             label="vs mean buffered")
    ax2.plot(counts, [r.speedup_vs_min for r in rows], color="black", lw=0.8,
             label="vs fastest buffered")
    ax2.plot(counts, [r.speedup_vs_max for r in rows], color="black", lw=0.8,
             ls=":", label="vs slowest buffered")
    ax2.axhline(1.0, color="0.7", lw=0.6)
    ax2.set_xscale("log", base=2)
    ax2.set_xlabel("events per run")
    ax2.set_ylabel("cooperative speedup")
    ax2.legend()
    ax2.set_title("Relative speedup")
    fig.tight_layout()
    out = os.path.join(outdir, "throughput.png")
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return [out]


def plot_frame_bench(reports: Sequence[FrameBenchReport], outdir: str) -> list[str]:
    """Render bytes-copied and frame-rate charts for the four scenarios."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import os

    os.makedirs(outdir, exist_ok=True)
    names = [r.scenario for r in reports]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    ax1.bar(names, [r.bytes_copied / 1e6 for r in reports], color="tab:blue")
    ax1.set_ylabel("bytes copied over boundary (MB)")
    ax1.tick_params(axis="x", rotation=20)
    ax2.bar(names, [r.frames_per_second for r in reports], color="purple")
    ax2.set_ylabel("frames through detector per second")
    ax2.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    out = os.path.join(outdir, "frame_bench.png")
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return [out]
