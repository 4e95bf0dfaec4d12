"""Shared domain types for spike volumes, spike-like streams and segments.

Everything here is immutable after construction: numpy payloads are copied
and flagged read-only so the objects can be shared between workers.

Time indices are 0-based: the first readout step is frame 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class SpikeStabError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SpikeStabError, ValueError):
    """A value violates a type invariant or an operation precondition."""


class BoundsError(SpikeStabError, IndexError):
    """Pixel coordinates fall outside a volume or image."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SpikeVolume:
    """Binary camera output, stored pixel-major as ``bits[y, x, n]``.

    Pixel-major storage keeps each pixel's time series contiguous, which is
    what every reconstruction kernel walks. Use :meth:`from_frames` to build
    a volume from frame-major ``(frames, height, width)`` data.
    """

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 3:
            raise ValidationError(f"bits must be 3-D (height, width, frames), got shape {bits.shape}")
        h, w, _ = bits.shape
        if h < 1 or w < 1:
            raise ValidationError(f"width and height must be >= 1, got {w}x{h}")
        if bits.dtype != np.uint8:
            if bits.size and not np.isin(bits, (0, 1)).all():
                raise ValidationError("spike volume elements must be exactly 0 or 1")
            bits = bits.astype(np.uint8)
        elif bits.size and bits.max() > 1:
            raise ValidationError("spike volume elements must be exactly 0 or 1")
        object.__setattr__(self, "bits", _frozen(np.ascontiguousarray(bits)))

    @classmethod
    def from_frames(cls, frames: np.ndarray) -> SpikeVolume:
        """Build from frame-major data shaped ``(frames, height, width)``."""
        frames = np.asarray(frames)
        if frames.ndim != 3:
            raise ValidationError(f"frames must be 3-D (frames, height, width), got shape {frames.shape}")
        return cls(np.moveaxis(frames, 0, -1))

    @classmethod
    def empty(cls, width: int, height: int) -> SpikeVolume:
        return cls(np.zeros((height, width, 0), dtype=np.uint8))

    @classmethod
    def from_pixel_streams(cls, width: int, height: int, streams: Sequence[SpikeLikeStream]) -> SpikeVolume:
        """Inverse of :func:`pixel_stream` over all pixels in row-major order."""
        if len(streams) != width * height:
            raise ValidationError(f"expected {width * height} streams, got {len(streams)}")
        frames = len(streams[0]) if streams else 0
        bits = np.zeros((height, width, frames), dtype=np.uint8)
        for p, s in enumerate(streams):
            if len(s) != frames:
                raise ValidationError("all pixel streams must have the same length")
            bits[p // width, p % width] = (s.values == s.firing_value)
        return cls(bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def frames(self) -> int:
        return self.bits.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        """``(width, height, frames)``."""
        return self.width, self.height, self.frames

    def frame(self, n: int) -> np.ndarray:
        """Frame ``n`` as a ``(height, width)`` view."""
        return self.bits[:, :, n]

    def to_frames(self) -> np.ndarray:
        """Frame-major copy shaped ``(frames, height, width)``."""
        return np.ascontiguousarray(np.moveaxis(self.bits, -1, 0))

    def pixel_major(self) -> np.ndarray:
        """``(height * width, frames)`` view, one row per pixel."""
        return self.bits.reshape(self.height * self.width, self.frames)

    def __eq__(self, other):
        if not isinstance(other, SpikeVolume):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    def __repr__(self):
        return f"SpikeVolume(width={self.width}, height={self.height}, frames={self.frames})"


@dataclass(frozen=True, eq=False)
class SpikeLikeStream:
    """Integer sequence made of a firing value and (optionally) a resting value.

    A camera spike stream is the special case ``firing_value=1, resting_value=0``.
    ``resting_value`` may be omitted only when every element equals the
    firing value.
    """

    values: np.ndarray
    firing_value: int = 1
    resting_value: int | None = 0

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 1:
            raise ValidationError("a spike-like stream is one-dimensional")
        values = values.astype(np.int64, copy=False)
        distinct = np.unique(values)
        if distinct.size > 2:
            raise ValidationError(
                f"spike-like stream has {distinct.size} distinct values; at most two are allowed"
            )
        e1, e2 = int(self.firing_value), self.resting_value
        if e2 is not None:
            e2 = int(e2)
            if e1 == e2:
                raise ValidationError("firing and resting values must differ")
            allowed = (e1, e2)
        else:
            allowed = (e1,)
        stray = [int(v) for v in distinct if int(v) not in allowed]
        if stray:
            raise ValidationError(f"values {stray} are neither firing value {e1} nor resting value {e2}")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "firing_value", e1)
        object.__setattr__(self, "resting_value", e2)

    @classmethod
    def spikes(cls, bits: Iterable[int]) -> SpikeLikeStream:
        return cls(np.fromiter((int(b) for b in bits), dtype=np.int64), 1, 0)

    def firing_positions(self) -> np.ndarray:
        return np.flatnonzero(self.values == self.firing_value)

    def __len__(self):
        return self.values.size

    def __iter__(self):
        return iter(self.values.tolist())

    def __eq__(self, other):
        if not isinstance(other, SpikeLikeStream):
            return NotImplemented
        return (
            self.firing_value == other.firing_value
            and self.resting_value == other.resting_value
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        head = self.values[:12].tolist()
        more = ", ..." if self.values.size > 12 else ""
        return f"SpikeLikeStream({head}{more}, e1={self.firing_value}, e2={self.resting_value})"


@dataclass(frozen=True, eq=False)
class IntervalStream:
    """Gaps between consecutive firing values; every element is >= 1."""

    intervals: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        iv = np.asarray(self.intervals)
        if iv.ndim != 1:
            raise ValidationError("an interval stream is one-dimensional")
        iv = iv.astype(np.int64, copy=False)
        if iv.size and iv.min() < 1:
            raise ValidationError("intervals must be >= 1")
        object.__setattr__(self, "intervals", _frozen(iv))

    def __len__(self):
        return self.intervals.size

    def __iter__(self):
        return iter(self.intervals.tolist())

    def __getitem__(self, i):
        return self.intervals[i]

    def __eq__(self, other):
        if isinstance(other, IntervalStream):
            return np.array_equal(self.intervals, other.intervals)
        if isinstance(other, (list, tuple)):
            return self.intervals.tolist() == list(other)
        return NotImplemented

    def distinct(self) -> list[int]:
        return np.unique(self.intervals).tolist()

    def as_spike_like(self, firing_value: int) -> SpikeLikeStream:
        """View this interval stream as a spike-like stream with the given firing value."""
        others = [v for v in self.distinct() if v != firing_value]
        resting = others[0] if others else None
        return SpikeLikeStream(self.intervals, firing_value, resting)

    def __repr__(self):
        return f"IntervalStream({self.intervals.tolist()})"


@dataclass(frozen=True, eq=False)
class Segment:
    """One stable run of a pixel stream.

    ``[start_frame, end_frame)`` is the span of frames the run explains.
    A run with no intervals (fewer than two spikes) is *degenerate*; its
    intensity is a carried value rather than a measurement.
    """

    start_frame: int
    end_frame: int
    intervals: IntervalStream = field(default_factory=IntervalStream)
    intensity: float = 0.0

    def __post_init__(self):
        if not isinstance(self.intervals, IntervalStream):
            object.__setattr__(self, "intervals", IntervalStream(np.asarray(self.intervals, dtype=np.int64)))
        if not self.start_frame < self.end_frame:
            raise ValidationError(f"segment needs start < end, got [{self.start_frame}, {self.end_frame})")
        intensity = float(self.intensity)
        if not (0.0 <= intensity <= 255.0):
            raise ValidationError(f"segment intensity {intensity} outside [0, 255]")
        object.__setattr__(self, "intensity", intensity)

    @property
    def degenerate(self) -> bool:
        return len(self.intervals) == 0

    @property
    def duration(self) -> int:
        return self.end_frame - self.start_frame

    def __eq__(self, other):
        if not isinstance(other, Segment):
            return NotImplemented
        return (
            self.start_frame == other.start_frame
            and self.end_frame == other.end_frame
            and self.intervals == other.intervals
            and self.intensity == other.intensity
        )

    def __repr__(self):
        tag = " degenerate" if self.degenerate else ""
        return (
            f"Segment([{self.start_frame}, {self.end_frame}), n={len(self.intervals)},"
            f" I={self.intensity:.3f}{tag})"
        )


@dataclass(frozen=True, eq=False)
class IntensityImage:
    """Reconstructed grayscale frame, ``values[y, x]`` in [0, 255]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValidationError(f"image must be a non-empty 2-D array, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValidationError("image values must be finite")
        if v.min() < 0.0 or v.max() > 255.0:
            raise ValidationError(f"image values must lie in [0, 255], got [{v.min()}, {v.max()}]")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def constant(cls, width: int, height: int, value: float) -> IntensityImage:
        return cls(np.full((height, width), float(value)))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def quantized(self) -> np.ndarray:
        """8-bit copy, rounded half away from zero."""
        return quantize(self.values)

    def __eq__(self, other):
        if not isinstance(other, IntensityImage):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"IntensityImage({self.width}x{self.height})"


def quantize(values) -> np.ndarray:
    """Round to the nearest integer (ties away from zero) and clip to uint8."""
    v = np.asarray(values, dtype=np.float64)
    return np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8)


def pixel_stream(volume: SpikeVolume, x: int, y: int) -> SpikeLikeStream:
    """Time series of one pixel as a spike stream (``e1 = 1``, ``e2 = 0``)."""
    if not (0 <= x < volume.width and 0 <= y < volume.height):
        raise BoundsError(f"pixel ({x}, {y}) outside {volume.width}x{volume.height} volume")
    return SpikeLikeStream(volume.bits[y, x], 1, 0)
