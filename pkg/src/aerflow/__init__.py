"""aerflow: streaming toolkit for address-event representation data."""

from .events import (
    DVS346,
    ChecksumSink,
    Event,
    Geometry,
    checksum,
    make_event,
    synthetic_stream,
)
from .codec import (
    decode_text,
    encode_text,
    pack_word,
    read_file,
    unpack_word,
    write_file,
)
from .net import UdpSink, UdpSource, decode_packet, encode_packets
from .runtime import RunReport, RuntimeKind, run_pipeline
from .frames import (
    DeviceBoundary,
    Frame,
    accumulate,
    paced_playback,
    transfer_dense,
    transfer_sparse,
    window_by_time,
)
from .edge import LAPLACIAN_3X3, LifParams, LifState, convolve2d, detect_edges, lif_step

__version__ = "0.1.0"

__all__ = [
    "ChecksumSink", "DVS346", "Event", "Geometry", "checksum", "make_event",
    "synthetic_stream", "pack_word", "unpack_word", "read_file", "write_file",
    "encode_text", "decode_text", "UdpSink", "UdpSource", "decode_packet",
    "encode_packets", "RunReport", "RuntimeKind", "run_pipeline",
    "DeviceBoundary", "Frame", "accumulate", "paced_playback",
    "transfer_dense", "transfer_sparse", "window_by_time", "LAPLACIAN_3X3",
    "LifParams", "LifState", "convolve2d", "detect_edges", "lif_step",
    "__version__",
]
