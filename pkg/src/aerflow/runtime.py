"""Pipeline execution strategies under one interface.

Three interchangeable runtimes move events from a source through an
ordered list of stages into a sink:

  * baseline_unsynchronized: one thread of control, plain function calls,
    no shared-state protection. The reference semantics.
  * buffered_locked: the caller thread fills fixed-size buffers and
    publishes full ones under a mutual-exclusion barrier to worker
    threads; an emitter restores publication order before the sink sees
    anything. The final partial buffer is always flushed.
  * cooperative: stages are resumable tasks chained by per-event
    suspend/resume handoff (generator send, costing about a function
    call), with no lock on the per-event hot path. Workers are
    cooperating task lanes inside one thread: coroutines provide
    concurrency, not parallelism.

All three give the same observable behaviour: every source event passes
through all stages in order and reaches the sink exactly once, with
per-source FIFO order preserved end to end. Only throughput differs.

A stage maps one event to zero or more events (filter / map / fan-out)
and must be stateless or internally synchronized; it never mutates its
input. Sinks are per-event callables.
"""

from __future__ import annotations

import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from .errors import ParameterError, StageError
from .events import Event

Stage = Callable[[Event], Iterable[Event]]
Sink = Callable[[Event], None]

BASELINE = "baseline_unsynchronized"
BUFFERED = "buffered_locked"
COOPERATIVE = "cooperative"
_KINDS = (BASELINE, BUFFERED, COOPERATIVE)


def default_workers() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class RuntimeKind:
    kind: str
    buffer_size: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ParameterError(f"unknown runtime kind {self.kind!r}")
        if self.kind == BUFFERED:
            if self.buffer_size is None or self.buffer_size < 1:
                raise ParameterError(f"buffer_size must be >= 1: {self.buffer_size}")
        elif self.buffer_size is not None:
            raise ParameterError(f"{self.kind} takes no buffer_size")
        if self.workers < 1:
            raise ParameterError(f"workers must be >= 1: {self.workers}")

    @classmethod
    def baseline(cls) -> "RuntimeKind":
        return cls(BASELINE)

    @classmethod
    def buffered_locked(cls, buffer_size: int = 1024,
                        workers: Optional[int] = None) -> "RuntimeKind":
        return cls(BUFFERED, buffer_size,
                   workers if workers is not None else default_workers())

    @classmethod
    def cooperative(cls, workers: Optional[int] = None) -> "RuntimeKind":
        return cls(COOPERATIVE, None,
                   workers if workers is not None else default_workers())


@dataclass
class RunReport:
    events_in: int
    events_out: int
    wall_time: float


def _apply_stages(stages: Sequence[Stage], event: Event) -> list[Event]:
    outs = [event]
    for idx, stage in enumerate(stages):
        nxt = []
        for ev in outs:
            try:
                nxt.extend(stage(ev))
            except Exception as exc:
                raise StageError(idx, exc) from exc
        outs = nxt
        if not outs:
            break
    return outs


def run_pipeline(source: Iterable[Event], stages: Sequence[Stage],
                 sink: Sink, kind: RuntimeKind) -> RunReport:
    """Drive every source event through the stages into the sink."""
    stages = list(stages)
    start = time.perf_counter()
    if kind.kind == BASELINE:
        events_in, events_out = _run_baseline(source, stages, sink)
    elif kind.kind == COOPERATIVE:
        events_in, events_out = _run_cooperative(source, stages, sink, kind.workers)
    else:
        events_in, events_out = _run_buffered(source, stages, sink,
                                              kind.buffer_size, kind.workers)
    return RunReport(events_in, events_out, time.perf_counter() - start)


def _run_baseline(source, stages, sink):
    if not stages:
        n = 0
        for ev in source:
            sink(ev)
            n += 1
        return n, n
    events_in = events_out = 0
    for ev in source:
        events_in += 1
        for out in _apply_stages(stages, ev):
            sink(out)
            events_out += 1
    return events_in, events_out


def _run_cooperative(source, stages, sink, workers):
    out_cell = [0]

    def sink_task():
        deliver = sink
        n = 0
        try:
            while True:
                deliver((yield))
                n += 1
        finally:
            out_cell[0] = n

    def stage_task(idx, stage, downstream_send):
        while True:
            ev = yield
            try:
                outs = stage(ev)
            except Exception as exc:
                raise StageError(idx, exc) from exc
            for out in outs:
                downstream_send(out)

    tasks = []
    terminal = sink_task()
    terminal.send(None)
    tasks.append(terminal)
    lanes = []
    for _ in range(workers):
        downstream = terminal.send
        for idx in range(len(stages) - 1, -1, -1):
            task = stage_task(idx, stages[idx], downstream)
            task.send(None)
            tasks.append(task)
            downstream = task.send
        lanes.append(downstream)

    events_in = 0
    try:
        if workers == 1:
            send = lanes[0]
            for ev in source:
                events_in += 1
                send(ev)
        else:
            lane = 0
            for ev in source:
                events_in += 1
                lanes[lane](ev)
                lane = (lane + 1) % workers
    finally:
        for task in tasks:
            task.close()
    return events_in, out_cell[0]


class _BufferedState:
    """Shared state for the buffered_locked runtime, one Condition for all."""

    def __init__(self, workers):
        self.cv = threading.Condition()
        self.work: deque = deque()
        self.completed: dict[int, list[Event]] = {}
        self.next_emit = 0
        self.total = None        # buffer count, set once the producer finishes
        self.failure: Optional[BaseException] = None
        self.work_cap = 2 * workers + 2
        self.completed_cap = 2 * workers + 8

    def fail(self, exc: BaseException):
        with self.cv:
            if self.failure is None:
                self.failure = exc
            self.cv.notify_all()


def _run_buffered(source, stages, sink, buffer_size, workers):
    state = _BufferedState(workers)
    cv = state.cv

    def worker_loop():
        try:
            while True:
                with cv:
                    # holding back on a completed-buffer backlog keeps memory
                    # bounded without ever blocking a publish
                    while (not state.work or len(state.completed) >= state.completed_cap) \
                            and state.failure is None:
                        if state.total is not None and not state.work:
                            return
                        cv.wait()
                    if state.failure is not None:
                        return
                    seq, buf = state.work.popleft()
                    cv.notify_all()
                if stages:
                    outs = []
                    for ev in buf:
                        outs.extend(_apply_stages(stages, ev))
                else:
                    outs = buf
                with cv:
                    state.completed[seq] = outs
                    cv.notify_all()
        except BaseException as exc:
            state.fail(exc)

    emitted = [0]

    def emitter_loop():
        try:
            while True:
                with cv:
                    while state.next_emit not in state.completed and state.failure is None:
                        if state.total is not None and state.next_emit >= state.total:
                            return
                        cv.wait()
                    if state.failure is not None:
                        return
                    outs = state.completed.pop(state.next_emit)
                    cv.notify_all()
                for ev in outs:
                    sink(ev)
                emitted[0] += len(outs)
                with cv:
                    state.next_emit += 1
                    cv.notify_all()
        except BaseException as exc:
            state.fail(exc)

    threads = [threading.Thread(target=worker_loop, name=f"aerflow-worker-{i}")
               for i in range(workers)]
    threads.append(threading.Thread(target=emitter_loop, name="aerflow-emitter"))
    for th in threads:
        th.start()

    events_in = 0
    seq = 0
    producer_error = None
    try:
        buf = []
        for ev in source:
            events_in += 1
            buf.append(ev)
            if len(buf) == buffer_size:
                with cv:
                    while len(state.work) >= state.work_cap and state.failure is None:
                        cv.wait()
                    if state.failure is not None:
                        break
                    state.work.append((seq, buf))
                    cv.notify_all()
                seq += 1
                buf = []
        else:
            if buf and state.failure is None:
                with cv:
                    state.work.append((seq, buf))
                    seq += 1
                    cv.notify_all()
    except BaseException as exc:
        producer_error = exc
        state.fail(exc)
    finally:
        with cv:
            if state.total is None:
                state.total = seq
            cv.notify_all()
        for th in threads:
            th.join()

    if producer_error is not None:
        raise producer_error
    if state.failure is not None:
        raise state.failure
    return events_in, emitted[0]
