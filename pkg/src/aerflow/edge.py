"""Spiking edge detector: 2D convolution feeding a leaky integrate-and-fire
layer with a refractory term, stepped once per frame window.

Per pixel and step, with beta = exp(-dt / tau_mem):

    refractory (r > 0):  r -= 1, v = v_reset, no spike
    otherwise:           v = beta * v + input
                         spike iff v >= v_th, then v = v_reset, r = refrac_steps

The convolution is cross-correlation with zero padding and same-size
output; the default kernel is the 3x3 Laplacian, whose symmetry makes
the correlation/convolution distinction moot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Optional, Union

import cv2
import numpy as np

from .errors import ParameterError, StateError
from .events import Geometry
from .frames import Frame

LAPLACIAN_3X3 = np.array([[0.0, 1.0, 0.0],
                          [1.0, -4.0, 1.0],
                          [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class LifParams:
    dt: float                      # step duration, microseconds; must equal the frame dt
    tau_mem: float = 10_000.0      # membrane time constant, microseconds
    v_th: float = 1.0
    v_reset: float = 0.0
    refrac_steps: int = 2

    def __post_init__(self):
        if self.dt <= 0:
            raise ParameterError(f"dt must be positive: {self.dt}")
        if self.tau_mem <= 0:
            raise ParameterError(f"tau_mem must be positive: {self.tau_mem}")
        if not self.v_th > self.v_reset:
            raise ParameterError(
                f"v_th ({self.v_th}) must exceed v_reset ({self.v_reset})"
            )
        if self.refrac_steps < 0:
            raise ParameterError(f"refrac_steps must be >= 0: {self.refrac_steps}")

    @property
    def beta(self) -> float:
        return math.exp(-self.dt / self.tau_mem)


@dataclass
class LifState:
    v: np.ndarray   # membrane potential, float64
    r: np.ndarray   # remaining refractory steps, int32

    @classmethod
    def zeros(cls, geometry: Geometry) -> "LifState":
        shape = (geometry.height, geometry.width)
        return cls(np.zeros(shape), np.zeros(shape, dtype=np.int32))


def check_kernel(kernel: np.ndarray):
    kernel = np.asarray(kernel)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise ParameterError(f"kernel must be square, got shape {kernel.shape}")
    if kernel.shape[0] % 2 == 0:
        raise ParameterError(f"kernel side must be odd, got {kernel.shape[0]}")
    if not np.all(np.isfinite(kernel)):
        raise ParameterError("kernel weights must be finite")


def convolve2d(frame: Union[Frame, np.ndarray], kernel: np.ndarray) -> np.ndarray:
    """Same-size cross-correlation with zero padding."""
    grid = frame.values if isinstance(frame, Frame) else np.asarray(frame)
    kernel = np.asarray(kernel, dtype=np.float64)
    check_kernel(kernel)
    if kernel.shape[0] > min(grid.shape):
        raise ParameterError(
            f"kernel side {kernel.shape[0]} exceeds frame dims {grid.shape}"
        )
    return cv2.filter2D(grid.astype(np.float64), -1, kernel,
                        borderType=cv2.BORDER_CONSTANT)


def lif_step(state: LifState, input_grid: np.ndarray,
             params: LifParams) -> tuple[LifState, np.ndarray]:
    """Advance every pixel one step; returns (new state, {0,1} spike grid)."""
    if state.v.shape != input_grid.shape or state.r.shape != input_grid.shape:
        raise ParameterError(
            f"shape mismatch: state {state.v.shape} vs input {input_grid.shape}"
        )
    refractory = state.r > 0
    v_next = state.v * params.beta
    v_next += input_grid
    spikes = v_next >= params.v_th
    spikes &= ~refractory
    v_next[spikes | refractory] = params.v_reset
    r_next = state.r - 1
    np.maximum(r_next, 0, out=r_next)
    r_next[spikes] = params.refrac_steps
    return LifState(v_next, r_next), spikes.view(np.uint8)


def detect_edges(frames: Iterable[Frame], kernel: Optional[np.ndarray] = None,
                 params: Optional[LifParams] = None) -> Iterator[np.ndarray]:
    """Stream spike grids, one per frame, threading the LIF state across
    frames. Deterministic for a fixed input stream."""
    kernel = LAPLACIAN_3X3 if kernel is None else np.asarray(kernel, dtype=np.float64)
    check_kernel(kernel)
    state = None
    geometry = None
    for frame in frames:
        if geometry is None:
            geometry = frame.geometry
            if params is None:
                params = LifParams(dt=float(frame.window_end - frame.window_start))
            state = LifState.zeros(geometry)
        elif frame.geometry != geometry:
            raise StateError(
                f"geometry changed mid-stream: {geometry} -> {frame.geometry}"
            )
        state, spikes = lif_step(state, convolve2d(frame, kernel), params)
        yield spikes


class EdgeDetector:
    """Push-style wrapper around the same dynamics, for sinks."""

    def __init__(self, geometry: Geometry, params: LifParams,
                 kernel: Optional[np.ndarray] = None):
        self.kernel = LAPLACIAN_3X3 if kernel is None else np.asarray(kernel, dtype=np.float64)
        check_kernel(self.kernel)
        self.params = params
        self.geometry = geometry
        self.state = LifState.zeros(geometry)

    def step(self, frame: Frame) -> np.ndarray:
        if frame.geometry != self.geometry:
            raise StateError(
                f"geometry changed mid-stream: {self.geometry} -> {frame.geometry}"
            )
        self.state, spikes = lif_step(self.state, convolve2d(frame, self.kernel),
                                      self.params)
        return spikes


def write_pgm(grid: np.ndarray, stream: IO[str]):
    """Plain-text (P2) PGM dump of a non-negative integer grid."""
    grid = np.asarray(grid)
    maxval = max(1, int(grid.max()) if grid.size else 1)
    stream.write(f"P2\n{grid.shape[1]} {grid.shape[0]}\n{maxval}\n")
    for row in grid:
        stream.write(" ".join(str(int(v)) for v in row))
        stream.write("\n")


def write_grid_csv(grid: np.ndarray, stream: IO[str]):
    for row in np.asarray(grid):
        stream.write(",".join(str(int(v)) for v in row))
        stream.write("\n")
