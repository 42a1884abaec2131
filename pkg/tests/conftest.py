import pytest

from aerflow.bench import write_synthetic_fixture
from aerflow.events import DVS346, Geometry

DESK_SEED = 1234
DESK_EVENTS = 1 << 22
DESK_SPAN_S = 4.0


@pytest.fixture(scope="session")
def desk_fixture(tmp_path_factory) -> str:
    """The 4-second, 2^22-event, 346x260 file used by the frame benchmarks."""
    path = tmp_path_factory.mktemp("fixtures") / "desk_4s.aerf"
    write_synthetic_fixture(str(path), seed=DESK_SEED, n=DESK_EVENTS,
                            geometry=DVS346, rate=DESK_EVENTS / DESK_SPAN_S)
    return str(path)


@pytest.fixture(scope="session")
def small_fixture(tmp_path_factory) -> str:
    """A 0.05 s, 20k-event, 64x48 file for quick pipeline tests."""
    path = tmp_path_factory.mktemp("fixtures") / "small.aerf"
    write_synthetic_fixture(str(path), seed=11, n=20_000,
                            geometry=Geometry(64, 48), rate=20_000 / 0.05)
    return str(path)
