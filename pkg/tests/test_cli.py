import io
import os
import signal
import socket
import subprocess
import sys
import threading
import time

import pytest

from aerflow.cli import (
    FrameBenchCmd,
    HelpCmd,
    PipelineSpec,
    PlotCmd,
    ThroughputCmd,
    UsageError,
    parse_args,
    run,
)
from aerflow.codec import decode_text, read_file
from aerflow.events import Event, Geometry
from aerflow.net import UdpSink


def _run(argv, stdin_events=None):
    out, err = io.StringIO(), io.StringIO()
    code = run(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def _free_port():
    s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


# ---------------------------------------------------------------- parsing

def test_parse_file_to_stdout():
    spec = parse_args(["input", "file", "in.aerf", "output", "stdout"])
    assert isinstance(spec, PipelineSpec)
    assert spec.input.kind == "file" and spec.input.path == "in.aerf"
    assert spec.output.kind == "stdout"
    assert spec.runtime == "cooperative"  # default


def test_parse_udp_to_file():
    spec = parse_args(["input", "udp", "0.0.0.0:3333", "output", "file", "out.aerf"])
    assert spec.input.kind == "udp" and spec.input.bind == "0.0.0.0:3333"
    assert spec.output.kind == "file" and spec.output.path == "out.aerf"


def test_parse_synthetic_options_and_flags():
    spec = parse_args(["input", "synthetic", "--seed", "9", "--count", "42",
                       "--rate", "5e5", "output", "frames", "--dir", "d",
                       "--dt-us", "500", "--mode", "binary", "--detect",
                       "--runtime", "buffered", "--buffer", "32",
                       "--workers", "3", "--geometry", "64x48"])
    assert (spec.input.seed, spec.input.count, spec.input.rate) == (9, 42, 5e5)
    assert spec.output.directory == "d" and spec.output.dt == 500
    assert spec.output.mode == "binary" and spec.output.detect
    assert spec.runtime == "buffered" and spec.buffer_size == 32
    assert spec.workers == 3
    assert spec.geometry == Geometry(64, 48)


def test_parse_bench_commands():
    cmd = parse_args(["bench", "throughput", "--counts", "64,256", "--reps", "3"])
    assert isinstance(cmd, ThroughputCmd)
    assert cmd.counts == (64, 256) and cmd.reps == 3
    cmd = parse_args(["bench", "frames", "--file", "f.aerf", "--scenario",
                      "locked_dense", "--speed", "2.5"])
    assert isinstance(cmd, FrameBenchCmd)
    assert cmd.scenario == "locked_dense" and cmd.speed == 2.5
    cmd = parse_args(["bench", "plot", "--records", "r.csv", "--out", "dir"])
    assert isinstance(cmd, PlotCmd)


def test_parse_help():
    assert isinstance(parse_args([]), HelpCmd)
    assert isinstance(parse_args(["--help"]), HelpCmd)


@pytest.mark.parametrize("argv", [
    ["input", "file", "x", "output"],            # missing output kind
    ["input", "file", "output", "stdout"],       # swallowed path
    ["input", "teleport", "x", "output", "stdout"],
    ["input", "file", "x", "output", "stdout", "--runtime", "magic"],
    ["input", "file", "x", "output", "stdout", "--bogus", "1"],
    ["output", "stdout"],
    ["bench", "nothing"],
    ["bench", "frames", "--file", "f"],          # missing scenario
    ["bench", "frames", "--file", "f", "--scenario", "warp"],
    ["input", "synthetic", "--count", "abc", "output", "stdout"],
    ["input", "file", "x", "output", "frames"],  # frames without --dir
])
def test_parse_errors(argv):
    with pytest.raises(UsageError):
        parse_args(argv)
    code, _, err = _run(argv)
    assert code == 2
    assert "usage:" in err


def test_help_exit_zero():
    code, out, _ = _run(["--help"])
    assert code == 0 and "usage:" in out


# ----------------------------------------------------- execution: sources

def test_missing_input_file_is_runtime_failure(tmp_path):
    code, _, err = _run(["input", "file", str(tmp_path / "absent.aerf"),
                         "output", "stdout"])
    assert code == 1 and "error:" in err


def test_synthetic_to_stdout():
    code, out, err = _run(["input", "synthetic", "--count", "100",
                           "output", "stdout"])
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 100
    first = decode_text(lines[0] + "\n")
    assert first.x < 346 and first.y < 260
    assert "events_in=100 events_out=100" in err


def test_synthetic_to_file_roundtrip(tmp_path):
    path = tmp_path / "events.aerf"
    code, _, _ = _run(["input", "synthetic", "--count", "250", "--seed", "3",
                       "output", "file", str(path)])
    assert code == 0
    with open(path, "rb") as fh:
        geometry, events = read_file(fh)
        events = list(events)
    assert geometry == Geometry(346, 260)
    assert len(events) == 250


def test_synthetic_to_frames_dir(tmp_path):
    outdir = tmp_path / "frames"
    code, _, _ = _run(["input", "synthetic", "--count", "1000", "--rate", "1e6",
                       "output", "frames", "--dir", str(outdir), "--dt-us", "250"])
    assert code == 0
    files = sorted(os.listdir(outdir))
    assert files[0] == "frame_000000.csv"
    total = 0
    for name in files:
        with open(outdir / name) as fh:
            total += sum(int(v) for line in fh for v in line.strip().split(","))
    assert total == 1000  # mass conservation through the CLI path


def test_synthetic_to_frames_with_detector(tmp_path):
    outdir = tmp_path / "spikes"
    code, _, _ = _run(["input", "synthetic", "--count", "2000",
                       "output", "frames", "--dir", str(outdir),
                       "--dt-us", "500", "--detect"])
    assert code == 0
    names = os.listdir(outdir)
    assert names and all(n.startswith("spikes_") for n in names)


def test_synthetic_to_udp():
    recv = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    recv.bind(("127.0.0.1", 0))
    recv.settimeout(5.0)
    host, port = recv.getsockname()
    code, _, _ = _run(["input", "synthetic", "--count", "300",
                       "output", "udp", f"{host}:{port}"])
    assert code == 0
    words = 0
    try:
        while words < 300:
            payload, _ = recv.recvfrom(65536)
            words += len(payload) // 4
    finally:
        recv.close()
    assert words == 300


def test_file_to_stdout_and_file_and_frames(tmp_path, small_fixture):
    code, out, _ = _run(["input", "file", small_fixture, "output", "stdout"])
    assert code == 0 and len(out.splitlines()) == 20_000

    copy = tmp_path / "copy.aerf"
    code, _, _ = _run(["input", "file", small_fixture, "output", "file",
                       str(copy), "--runtime", "buffered", "--buffer", "128",
                       "--workers", "2"])
    assert code == 0
    with open(small_fixture, "rb") as fh:
        original = fh.read()
    assert copy.read_bytes() == original  # lossless, order preserved

    outdir = tmp_path / "f"
    code, _, _ = _run(["input", "file", small_fixture, "output", "frames",
                       "--dir", str(outdir), "--dt-us", "10000",
                       "--runtime", "baseline"])
    assert code == 0
    assert len(os.listdir(outdir)) == 5  # 50 ms / 10 ms


def test_file_to_udp(small_fixture):
    recv = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    recv.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 21)
    recv.bind(("127.0.0.1", 0))
    recv.settimeout(5.0)
    host, port = recv.getsockname()
    code, _, _ = _run(["input", "file", small_fixture, "output", "udp",
                       f"{host}:{port}"])
    assert code == 0
    words = 0
    try:
        while words < 20_000:
            payload, _ = recv.recvfrom(65536)
            words += len(payload) // 4
    finally:
        recv.close()
    assert words == 20_000


# ------------------------------------------------ execution: udp input

def _drive_udp_pipeline(argv, events, port, settle=0.6, sigint_after=1.4):
    """Run a udp-input pipeline in this (main) thread while a helper thread
    feeds events and then delivers SIGINT for the drain-and-exit path."""

    def feeder():
        time.sleep(settle)
        sink = UdpSink(("127.0.0.1", port), max_words=64, flush_interval_us=5000)
        for ev in events:
            sink(ev)
        sink.close()
        time.sleep(sigint_after - settle)
        signal.raise_signal(signal.SIGINT)

    thread = threading.Thread(target=feeder)
    thread.start()
    try:
        return _run(argv)
    finally:
        thread.join()


EVENTS_FOR_UDP = [Event(i % 64, i % 48, i % 2 == 0, i) for i in range(200)]


def test_udp_to_stdout():
    port = _free_port()
    code, out, err = _drive_udp_pipeline(
        ["input", "udp", f"127.0.0.1:{port}", "output", "stdout",
         "--geometry", "64x48"], EVENTS_FOR_UDP, port)
    assert code == 0
    assert len(out.splitlines()) == 200
    assert "dropped_outside_geometry=0" in err


def test_udp_to_file(tmp_path):
    port = _free_port()
    path = tmp_path / "udp.aerf"
    code, _, _ = _drive_udp_pipeline(
        ["input", "udp", f"127.0.0.1:{port}", "output", "file", str(path),
         "--geometry", "64x48"], EVENTS_FOR_UDP, port)
    assert code == 0
    with open(path, "rb") as fh:
        geometry, events = read_file(fh)
        events = list(events)
    assert geometry == Geometry(64, 48)
    assert len(events) == 200
    assert [(e.x, e.y, e.p) for e in events] == \
        [(e.x, e.y, e.p) for e in EVENTS_FOR_UDP]


def test_udp_to_frames(tmp_path):
    port = _free_port()
    outdir = tmp_path / "uf"
    code, _, _ = _drive_udp_pipeline(
        ["input", "udp", f"127.0.0.1:{port}", "output", "frames",
         "--dir", str(outdir), "--dt-us", "1000000", "--geometry", "64x48"],
        EVENTS_FOR_UDP, port)
    assert code == 0
    total = 0
    for name in os.listdir(outdir):
        with open(outdir / name) as fh:
            total += sum(int(v) for line in fh for v in line.strip().split(","))
    assert total == 200


def test_udp_to_udp():
    port = _free_port()
    recv = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    recv.bind(("127.0.0.1", 0))
    recv.settimeout(5.0)
    host, rport = recv.getsockname()
    code, _, _ = _drive_udp_pipeline(
        ["input", "udp", f"127.0.0.1:{port}", "output", "udp", f"{host}:{rport}",
         "--geometry", "64x48"], EVENTS_FOR_UDP, port)
    assert code == 0
    words = 0
    try:
        while words < 200:
            payload, _ = recv.recvfrom(65536)
            words += len(payload) // 4
    finally:
        recv.close()
    assert words == 200


# ----------------------------------------------------------- env and misc

def test_workers_env_default(monkeypatch):
    from aerflow.cli import _resolve_workers

    spec = parse_args(["input", "synthetic", "output", "stdout"])
    monkeypatch.setenv("AERFLOW_WORKERS", "7")
    assert _resolve_workers(spec) == 7
    monkeypatch.setenv("AERFLOW_WORKERS", "many")
    with pytest.raises(UsageError):
        _resolve_workers(spec)
    spec.workers = 2
    assert _resolve_workers(spec) == 2


def test_workers_env_bad_value_exits_2(monkeypatch):
    monkeypatch.setenv("AERFLOW_WORKERS", "many")
    code, _, _ = _run(["input", "synthetic", "--count", "10", "output", "stdout"])
    assert code == 2


def test_bench_throughput_cli(tmp_path):
    records = tmp_path / "records.csv"
    summary = tmp_path / "summary.csv"
    code, out, _ = _run(["bench", "throughput", "--counts", "200", "--buffers",
                         "16", "--worker-counts", "1", "--reps", "2",
                         "--out", str(records), "--summary", str(summary)])
    assert code == 0
    assert "speedup=" in out
    assert records.read_text().startswith("runtime_kind,")
    assert summary.read_text().startswith("event_count,")


def test_bench_frames_cli_and_plot(tmp_path, small_fixture):
    reports = tmp_path / "reports.csv"
    code, out, _ = _run(["bench", "frames", "--file", small_fixture,
                         "--scenario", "all", "--dt-us", "5000",
                         "--speed", "50", "--out", str(reports)])
    assert code == 0
    assert out.count("frames=10") == 4
    plots = tmp_path / "plots"
    code, out, _ = _run(["bench", "plot", "--frames", str(reports),
                         "--out", str(plots)])
    assert code == 0
    assert (plots / "frame_bench.png").exists()


def test_bench_frames_cli_missing_file(tmp_path):
    code, _, err = _run(["bench", "frames", "--file", str(tmp_path / "no.aerf"),
                         "--scenario", "locked_dense"])
    assert code == 1


def test_module_entrypoint_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "aerflow", "input", "synthetic", "--count", "50",
         "output", "stdout"], capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0
    assert len(proc.stdout.splitlines()) == 50
    bad = subprocess.run([sys.executable, "-m", "aerflow", "input", "file"],
                         capture_output=True, text=True, timeout=60)
    assert bad.returncode == 2
