import threading

import pytest

from aerflow.errors import ParameterError, StageError
from aerflow.events import DVS346, ChecksumSink, Event, checksum, synthetic_stream
from aerflow.runtime import RunReport, RuntimeKind, run_pipeline

EVENTS = list(synthetic_stream(3, 3000, DVS346, 1e6))

ALL_KINDS = [
    RuntimeKind.baseline(),
    RuntimeKind.buffered_locked(1, 1),
    RuntimeKind.buffered_locked(7, 2),
    RuntimeKind.buffered_locked(256, 4),
    RuntimeKind.cooperative(1),
    RuntimeKind.cooperative(2),
    RuntimeKind.cooperative(4),
]


class ListSink:
    def __init__(self):
        self.events = []

    def __call__(self, ev):
        self.events.append(ev)


def drop_negative(ev):
    return (ev,) if ev.p else ()


def duplicate(ev):
    return (ev, ev)


def shift_right(ev):
    return (Event(ev.x + 1, ev.y, ev.p, ev.t),)


def test_runtime_kind_validation():
    with pytest.raises(ParameterError):
        RuntimeKind.buffered_locked(0, 1)
    with pytest.raises(ParameterError):
        RuntimeKind.cooperative(0)
    with pytest.raises(ParameterError):
        RuntimeKind("nope")
    with pytest.raises(ParameterError):
        RuntimeKind("cooperative", buffer_size=8)


@pytest.mark.parametrize("kind", ALL_KINDS, ids=str)
def test_identity_pipeline_preserves_fifo_order(kind):
    sink = ListSink()
    report = run_pipeline(EVENTS, [], sink, kind)
    assert sink.events == EVENTS  # exact order, not just multiset
    assert report.events_in == report.events_out == len(EVENTS)
    assert report.wall_time > 0


@pytest.mark.parametrize("kind", ALL_KINDS, ids=str)
def test_checksum_equivalence(kind):
    sink = ChecksumSink()
    run_pipeline(EVENTS, [], sink, kind)
    assert sink.value == checksum(EVENTS)


@pytest.mark.parametrize("kind", ALL_KINDS, ids=str)
def test_filter_stage_counts(kind):
    events = [Event(1, 1, i < 40, i) for i in range(100)]
    sink = ListSink()
    report = run_pipeline(events, [drop_negative], sink, kind)
    assert report.events_in == 100
    assert report.events_out == 40
    assert len(sink.events) == 40
    assert all(ev.p for ev in sink.events)


@pytest.mark.parametrize("kind", ALL_KINDS, ids=str)
def test_stage_chain_matches_baseline(kind):
    stages = [duplicate, shift_right, drop_negative]
    expected = ListSink()
    run_pipeline(EVENTS, stages, expected, RuntimeKind.baseline())
    sink = ListSink()
    report = run_pipeline(EVENTS, stages, sink, kind)
    assert sink.events == expected.events
    assert report.events_out == len(expected.events)


@pytest.mark.parametrize("kind", ALL_KINDS, ids=str)
def test_fanout_outputs_stay_adjacent(kind):
    events = EVENTS[:50]
    sink = ListSink()
    run_pipeline(events, [duplicate], sink, kind)
    assert sink.events == [ev for ev in events for _ in range(2)]


@pytest.mark.parametrize("kind", ALL_KINDS, ids=str)
def test_empty_source(kind):
    sink = ListSink()
    report = run_pipeline([], [], sink, kind)
    assert report.events_in == report.events_out == 0
    assert sink.events == []


def test_partial_buffer_is_flushed():
    events = EVENTS[: 2 * 64 + 3]
    sink = ListSink()
    report = run_pipeline(events, [], sink, RuntimeKind.buffered_locked(64, 2))
    assert report.events_out == len(events)
    assert sink.events == events


@pytest.mark.parametrize("kind", ALL_KINDS, ids=str)
def test_stage_error_surfaces_index_and_cause(kind):
    boom = ValueError("boom at 1500")

    def exploding(ev):
        if ev.t >= EVENTS[1500].t:
            raise boom
        return (ev,)

    before = threading.active_count()
    with pytest.raises(StageError) as err:
        run_pipeline(EVENTS, [duplicate, exploding], ListSink(), kind)
    assert err.value.stage_index == 1
    assert err.value.cause is boom
    # clean drain: no worker threads left behind
    assert threading.active_count() == before


@pytest.mark.parametrize("kind", ALL_KINDS, ids=str)
def test_sink_error_propagates(kind):
    class FailingSink:
        def __init__(self):
            self.seen = 0

        def __call__(self, ev):
            self.seen += 1
            if self.seen == 10:
                raise OSError("sink full")

    with pytest.raises(OSError):
        run_pipeline(EVENTS, [], FailingSink(), kind)


def test_source_error_propagates():
    def bad_source():
        yield from EVENTS[:5]
        raise IOError("device vanished")

    for kind in (RuntimeKind.baseline(), RuntimeKind.buffered_locked(4, 2),
                 RuntimeKind.cooperative(2)):
        with pytest.raises(IOError):
            run_pipeline(bad_source(), [], ListSink(), kind)


def test_report_type():
    report = run_pipeline(EVENTS[:10], [], ListSink(), RuntimeKind.baseline())
    assert isinstance(report, RunReport)
