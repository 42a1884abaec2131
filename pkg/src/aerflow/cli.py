"""Command-line composition of sources and sinks, plus benchmark commands.

Grammar:

    aerflow input <kind> [opts] output <kind> [opts] [global flags]
    aerflow bench throughput [opts]
    aerflow bench frames --file F --scenario S [opts]
    aerflow bench plot [--records CSV] [--summary CSV] [--frames CSV] --out DIR

Any input kind composes with any output kind. Exit codes: 0 success,
1 runtime failure, 2 argument error.
"""

from __future__ import annotations

import os
import signal
import sys
from dataclasses import dataclass, field
from typing import Optional

from . import bench as bench_mod
from .codec import FileWriter, encode_text, read_file
from .edge import EdgeDetector, LifParams, write_grid_csv
from .errors import AerflowError
from .events import DVS346, Event, Geometry, synthetic_stream
from .frames import TimeWindower, frame_from_batch
from .net import UdpSink, UdpSource
from .runtime import RuntimeKind, default_workers, run_pipeline

USAGE = """\
usage: aerflow input <kind> [opts] output <kind> [opts] [flags]
       aerflow bench throughput [--counts N,..] [--buffers N,..]
                                [--worker-counts N,..] [--reps N] [--seed N]
                                [--out CSV] [--summary CSV]
       aerflow bench frames --file PATH --scenario NAME|all [--dt-us N]
                            [--speed X] [--runs N] [--out CSV]
       aerflow bench plot [--records CSV] [--summary CSV] [--frames CSV] --out DIR

input kinds:
  file PATH                      AERF event file
  udp HOST:PORT                  bind and receive SPIF-style datagrams
  synthetic [--seed N] [--count N] [--rate R]
                                 deterministic generated events

output kinds:
  file PATH                      AERF event file
  udp HOST:PORT                  transmit SPIF-style datagrams
  stdout                         one "t,x,y,p" line per event
  frames --dir DIR [--dt-us N] [--mode count|binary] [--detect]
                                 per-window grid CSVs (spike grids with --detect)

flags:
  --runtime cooperative|buffered|baseline   (default cooperative)
  --buffer N                     buffered runtime buffer size (default 1024)
  --workers N                    worker count (default $AERFLOW_WORKERS or cores)
  --geometry WxH                 geometry override (default 346x260 or file header)
  --help                         show this text

scenario names: locked_dense cooperative_dense locked_sparse cooperative_sparse
"""


class UsageError(AerflowError):
    pass


@dataclass
class InputSpec:
    kind: str
    path: Optional[str] = None
    bind: Optional[str] = None
    seed: int = 0
    count: int = 100_000
    rate: float = 1e6


@dataclass
class OutputSpec:
    kind: str
    path: Optional[str] = None
    target: Optional[str] = None
    directory: Optional[str] = None
    dt: int = 1000
    mode: str = "count"
    detect: bool = False


@dataclass
class PipelineSpec:
    input: InputSpec
    output: OutputSpec
    runtime: str = "cooperative"
    buffer_size: int = 1024
    workers: Optional[int] = None
    geometry: Optional[Geometry] = None


@dataclass
class ThroughputCmd:
    counts: tuple = bench_mod.DEFAULT_EVENT_COUNTS
    buffers: tuple = bench_mod.DEFAULT_BUFFER_SIZES
    worker_counts: tuple = bench_mod.DEFAULT_WORKER_COUNTS
    reps: int = bench_mod.DEFAULT_REPETITIONS
    seed: int = 42
    out: str = "throughput_records.csv"
    summary: str = "throughput_summary.csv"


@dataclass
class FrameBenchCmd:
    file: str
    scenario: str
    dt: int = 1000
    speed: float = 1.0
    runs: int = 1
    out: str = "frame_reports.csv"


@dataclass
class PlotCmd:
    records: Optional[str] = None
    summary: Optional[str] = None
    frames: Optional[str] = None
    out: str = "plots"


@dataclass
class HelpCmd:
    pass


class _Tokens:
    def __init__(self, argv):
        self._items = list(argv)
        self._pos = 0

    def peek(self) -> Optional[str]:
        return self._items[self._pos] if self._pos < len(self._items) else None

    def next(self, what: str) -> str:
        tok = self.peek()
        if tok is None:
            raise UsageError(f"missing {what}")
        self._pos += 1
        return tok

    def done(self) -> bool:
        return self._pos >= len(self._items)


def _parse_int(text: str, flag: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"{flag} expects an integer, got {text!r}") from None


def _parse_float(text: str, flag: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"{flag} expects a number, got {text!r}") from None


def _parse_geometry(text: str) -> Geometry:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise UsageError(f"--geometry expects WxH, got {text!r}")
    return Geometry(_parse_int(parts[0], "--geometry"), _parse_int(parts[1], "--geometry"))


def _parse_int_list(text: str, flag: str) -> tuple:
    return tuple(_parse_int(part, flag) for part in text.split(",") if part)


_GLOBAL_FLAGS = ("--runtime", "--buffer", "--workers", "--geometry")
_RUNTIME_NAMES = ("cooperative", "buffered", "baseline")


def _parse_input(tokens: _Tokens) -> InputSpec:
    kind = tokens.next("input kind")
    if kind == "file":
        return InputSpec("file", path=tokens.next("input file path"))
    if kind == "udp":
        return InputSpec("udp", bind=tokens.next("udp bind address"))
    if kind == "synthetic":
        spec = InputSpec("synthetic")
        while tokens.peek() in ("--seed", "--count", "--rate"):
            flag = tokens.next("flag")
            value = tokens.next(f"value for {flag}")
            if flag == "--seed":
                spec.seed = _parse_int(value, flag)
            elif flag == "--count":
                spec.count = _parse_int(value, flag)
            else:
                spec.rate = _parse_float(value, flag)
        return spec
    raise UsageError(f"unknown input kind {kind!r}")


def _parse_output(tokens: _Tokens) -> OutputSpec:
    kind = tokens.next("output kind")
    if kind == "file":
        return OutputSpec("file", path=tokens.next("output file path"))
    if kind == "udp":
        return OutputSpec("udp", target=tokens.next("udp target address"))
    if kind == "stdout":
        return OutputSpec("stdout")
    if kind == "frames":
        spec = OutputSpec("frames")
        while tokens.peek() in ("--dir", "--dt-us", "--mode", "--detect"):
            flag = tokens.next("flag")
            if flag == "--detect":
                spec.detect = True
                continue
            value = tokens.next(f"value for {flag}")
            if flag == "--dir":
                spec.directory = value
            elif flag == "--dt-us":
                spec.dt = _parse_int(value, flag)
            else:
                if value not in ("count", "binary"):
                    raise UsageError(f"--mode must be count or binary, got {value!r}")
                spec.mode = value
        if spec.directory is None:
            raise UsageError("output frames requires --dir DIR")
        return spec
    raise UsageError(f"unknown output kind {kind!r}")


def _parse_pipeline(tokens: _Tokens) -> PipelineSpec:
    inp = _parse_input(tokens)
    if tokens.next("'output' section") != "output":
        raise UsageError("expected 'output' after the input specification")
    out = _parse_output(tokens)
    spec = PipelineSpec(inp, out)
    while not tokens.done():
        flag = tokens.next("flag")
        if flag not in _GLOBAL_FLAGS:
            raise UsageError(f"unknown flag {flag!r}")
        value = tokens.next(f"value for {flag}")
        if flag == "--runtime":
            if value not in _RUNTIME_NAMES:
                raise UsageError(
                    f"--runtime must be one of {', '.join(_RUNTIME_NAMES)}, got {value!r}"
                )
            spec.runtime = value
        elif flag == "--buffer":
            spec.buffer_size = _parse_int(value, flag)
        elif flag == "--workers":
            spec.workers = _parse_int(value, flag)
        else:
            spec.geometry = _parse_geometry(value)
    return spec


def _parse_bench(tokens: _Tokens):
    sub = tokens.next("bench subcommand")
    if sub == "throughput":
        cmd = ThroughputCmd()
        while not tokens.done():
            flag = tokens.next("flag")
            value = tokens.next(f"value for {flag}")
            if flag == "--counts":
                cmd.counts = _parse_int_list(value, flag)
            elif flag == "--buffers":
                cmd.buffers = _parse_int_list(value, flag)
            elif flag == "--worker-counts":
                cmd.worker_counts = _parse_int_list(value, flag)
            elif flag == "--reps":
                cmd.reps = _parse_int(value, flag)
            elif flag == "--seed":
                cmd.seed = _parse_int(value, flag)
            elif flag == "--out":
                cmd.out = value
            elif flag == "--summary":
                cmd.summary = value
            else:
                raise UsageError(f"unknown flag {flag!r}")
        return cmd
    if sub == "frames":
        file = scenario = None
        cmd = FrameBenchCmd(file="", scenario="")
        while not tokens.done():
            flag = tokens.next("flag")
            value = tokens.next(f"value for {flag}")
            if flag == "--file":
                file = value
            elif flag == "--scenario":
                scenario = value
            elif flag == "--dt-us":
                cmd.dt = _parse_int(value, flag)
            elif flag == "--speed":
                cmd.speed = _parse_float(value, flag)
            elif flag == "--runs":
                cmd.runs = _parse_int(value, flag)
            elif flag == "--out":
                cmd.out = value
            else:
                raise UsageError(f"unknown flag {flag!r}")
        if file is None or scenario is None:
            raise UsageError("bench frames requires --file and --scenario")
        if scenario != "all" and scenario not in bench_mod.SCENARIOS:
            raise UsageError(
                f"--scenario must be 'all' or one of {', '.join(bench_mod.SCENARIOS)}"
            )
        cmd.file, cmd.scenario = file, scenario
        return cmd
    if sub == "plot":
        cmd = PlotCmd()
        while not tokens.done():
            flag = tokens.next("flag")
            value = tokens.next(f"value for {flag}")
            if flag == "--records":
                cmd.records = value
            elif flag == "--summary":
                cmd.summary = value
            elif flag == "--frames":
                cmd.frames = value
            elif flag == "--out":
                cmd.out = value
            else:
                raise UsageError(f"unknown flag {flag!r}")
        if cmd.records is None and cmd.frames is None:
            raise UsageError("bench plot requires --records and/or --frames")
        return cmd
    raise UsageError(f"unknown bench subcommand {sub!r}")


def parse_args(argv):
    """Pure argument parser: no I/O, raises UsageError on bad argv."""
    tokens = _Tokens(argv)
    first = tokens.peek()
    if first is None or first in ("--help", "-h", "help"):
        return HelpCmd()
    head = tokens.next("command")
    if head == "input":
        return _parse_pipeline(tokens)
    if head == "bench":
        return _parse_bench(tokens)
    raise UsageError(f"expected 'input' or 'bench', got {head!r}")


class _StdoutSink:
    def __init__(self, stream):
        self._stream = stream

    def __call__(self, ev: Event):
        self._stream.write(encode_text(ev))

    def close(self):
        self._stream.flush()


class _FileSink:
    def __init__(self, path: str, geometry: Geometry):
        self._fh = open(path, "wb")
        self._writer = FileWriter(self._fh, geometry)

    def __call__(self, ev: Event):
        self._writer.write(ev)

    def close(self):
        self._writer.close()
        self._fh.close()


class _FramesSink:
    """Writes one grid CSV per completed window into a directory."""

    def __init__(self, spec: OutputSpec, geometry: Geometry):
        os.makedirs(spec.directory, exist_ok=True)
        self._dir = spec.directory
        self._mode = spec.mode
        self._windower = TimeWindower(geometry, spec.dt)
        self._detector = None
        if spec.detect:
            self._detector = EdgeDetector(geometry, LifParams(dt=float(spec.dt)))
        self.windows_written = 0

    def __call__(self, ev: Event):
        for batch in self._windower.push(ev):
            self._write(batch)

    def _write(self, batch):
        frame = frame_from_batch(batch, self._mode)
        if self._detector is not None:
            grid = self._detector.step(frame)
            name = f"spikes_{batch.window_index:06d}.csv"
        else:
            grid = frame.values
            name = f"frame_{batch.window_index:06d}.csv"
        with open(os.path.join(self._dir, name), "w") as fh:
            write_grid_csv(grid, fh)
        self.windows_written += 1

    def close(self):
        for batch in self._windower.finish():
            self._write(batch)


def _resolve_workers(spec: PipelineSpec) -> int:
    if spec.workers is not None:
        return spec.workers
    env = os.environ.get("AERFLOW_WORKERS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"AERFLOW_WORKERS must be an integer, got {env!r}") from None
    return default_workers()


def _runtime_kind(spec: PipelineSpec) -> RuntimeKind:
    workers = _resolve_workers(spec)
    if spec.runtime == "baseline":
        return RuntimeKind.baseline()
    if spec.runtime == "buffered":
        return RuntimeKind.buffered_locked(spec.buffer_size, workers)
    return RuntimeKind.cooperative(workers)


def _execute_pipeline(spec: PipelineSpec, stdout, stderr) -> int:
    kind = _runtime_kind(spec)
    close_at_exit = []
    source = None
    sigint_restore = None
    try:
        if spec.input.kind == "file":
            fh = open(spec.input.path, "rb")
            close_at_exit.append(fh.close)
            file_geometry, events = read_file(fh)
            geometry = spec.geometry or file_geometry
            source = events
        elif spec.input.kind == "synthetic":
            geometry = spec.geometry or DVS346
            source = synthetic_stream(spec.input.seed, spec.input.count,
                                      geometry, spec.input.rate)
        else:
            geometry = spec.geometry or DVS346
            udp = UdpSource(spec.input.bind, geometry)
            close_at_exit.append(udp.close)
            source = iter(udp)
            # Ctrl-C closes the socket so the pipeline drains and exits cleanly
            def _stop(signum, frame):
                udp.close()
            try:
                sigint_restore = signal.signal(signal.SIGINT, _stop)
            except ValueError:
                sigint_restore = None  # not the main thread; caller manages shutdown

        if spec.output.kind == "stdout":
            sink = _StdoutSink(stdout)
        elif spec.output.kind == "file":
            sink = _FileSink(spec.output.path, geometry)
        elif spec.output.kind == "udp":
            sink = UdpSink(spec.output.target)
        else:
            sink = _FramesSink(spec.output, geometry)

        try:
            report = run_pipeline(source, [], sink, kind)
        finally:
            sink.close()
        print(f"events_in={report.events_in} events_out={report.events_out} "
              f"wall_time={report.wall_time:.6f}s runtime={kind.kind}",
              file=stderr)
        if spec.input.kind == "udp":
            print(f"dropped_outside_geometry={udp.drops}", file=stderr)
        return 0
    finally:
        if sigint_restore is not None:
            signal.signal(signal.SIGINT, sigint_restore)
        for close in close_at_exit:
            try:
                close()
            except OSError:
                pass


def _execute_throughput(cmd: ThroughputCmd, stdout, stderr) -> int:
    config = bench_mod.ThroughputConfig(
        event_counts=cmd.counts, buffer_sizes=cmd.buffers,
        worker_counts=cmd.worker_counts, repetitions=cmd.reps, seed=cmd.seed)
    records = bench_mod.run_throughput(
        config, progress=lambda msg: print(f"  {msg}", file=stderr))
    with open(cmd.out, "w", newline="") as fh:
        bench_mod.write_records_csv(records, fh)
    rows = bench_mod.summarize(records)
    with open(cmd.summary, "w", newline="") as fh:
        bench_mod.write_summary_csv(rows, fh)
    for row in rows:
        print(f"n={row.event_count}: baseline={row.baseline_mean_ns/1e6:.3f}ms "
              f"buffered={row.buffered_mean_ns/1e6:.3f}ms "
              f"cooperative={row.cooperative_mean_ns/1e6:.3f}ms "
              f"speedup={row.speedup_mean:.3f}", file=stdout)
    print(f"records -> {cmd.out}\nsummary -> {cmd.summary}", file=stderr)
    return 0


def _execute_frame_bench(cmd: FrameBenchCmd, stdout, stderr) -> int:
    scenarios = bench_mod.SCENARIOS if cmd.scenario == "all" else (cmd.scenario,)
    reports = []
    for scenario in scenarios:
        for _ in range(cmd.runs):
            report = bench_mod.run_frame_bench(cmd.file, scenario, dt=cmd.dt,
                                               speed=cmd.speed)
            reports.append(report)
            print(f"{scenario}: frames={report.frames_processed} "
                  f"bytes={report.bytes_copied} "
                  f"copy_fraction={report.copy_time_fraction:.4f} "
                  f"wall={report.wall_time:.3f}s "
                  f"fps={report.frames_per_second:.1f}", file=stdout)
    with open(cmd.out, "w", newline="") as fh:
        bench_mod.write_frame_reports_csv(reports, fh)
    print(f"reports -> {cmd.out}", file=stderr)
    return 0


def _execute_plot(cmd: PlotCmd, stdout, stderr) -> int:
    outputs = []
    if cmd.records:
        with open(cmd.records, newline="") as fh:
            records = bench_mod.read_records_csv(fh)
        rows = bench_mod.summarize(records)
        outputs += bench_mod.plot_throughput(records, rows, cmd.out)
    if cmd.frames:
        import csv as csv_mod

        with open(cmd.frames, newline="") as fh:
            raw = list(csv_mod.DictReader(fh))
        reports = [bench_mod.FrameBenchReport(
            scenario=r["scenario"], frames_processed=int(r["frames_processed"]),
            events_total=int(r["events_total"]), bytes_copied=int(r["bytes_copied"]),
            copy_time_ns=int(r["copy_time_ns"]),
            copy_time_fraction=float(r["copy_time_fraction"]),
            wall_time=float(r["wall_time_s"]),
            frames_per_second=float(r["frames_per_second"]),
            spikes_total=int(r["spikes_total"]), spike_digest=r["spike_digest"],
            file_span_us=int(r["file_span_us"])) for r in raw]
        outputs += bench_mod.plot_frame_bench(reports, cmd.out)
    for path in outputs:
        print(f"plot -> {path}", file=stdout)
    return 0


def run(argv, stdout=None, stderr=None) -> int:
    """Parse and execute; returns the process exit code."""
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    try:
        cmd = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=stderr)
        print(USAGE, file=stderr)
        return 2
    if isinstance(cmd, HelpCmd):
        print(USAGE, file=stdout)
        return 0
    try:
        if isinstance(cmd, PipelineSpec):
            return _execute_pipeline(cmd, stdout, stderr)
        if isinstance(cmd, ThroughputCmd):
            return _execute_throughput(cmd, stdout, stderr)
        if isinstance(cmd, FrameBenchCmd):
            return _execute_frame_bench(cmd, stdout, stderr)
        return _execute_plot(cmd, stdout, stderr)
    except UsageError as exc:
        print(f"error: {exc}", file=stderr)
        print(USAGE, file=stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted", file=stderr)
        return 1
    except (AerflowError, OSError) as exc:
        print(f"error: {exc}", file=stderr)
        return 1


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
