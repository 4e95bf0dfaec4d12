"""Parameter-free FSR/SSR reconstruction and the TFI/TFP baselines.

FSR and SSR split each pixel's spike stream wherever its interval stream
stops being zero-order stable, then read each stable run back as
``255 / mean interval``. SSR additionally inspects the second-level
interval streams (gaps between occurrences of each of the two interval
values) and may split a first-level run further; it never merges across a
first-level break.

Frame spans: the run holding intervals between spikes ``p_a .. p_b`` explains
frames ``p_a + 1 .. p_b`` (the light integrated to produce those spikes).
Frames before the first such run read 0; frames after the last run, and any
span with fewer than two spikes, carry the previous run's value.

The functions on single streams here are straightforward Python and double
as the reference for the compiled volume kernels in ``_kernels``.
"""

from __future__ import annotations

import os
import re
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numba
import numpy as np

from . import _kernels
from .core import IntensityImage, IntervalStream, Segment, SpikeLikeStream, SpikeVolume, ValidationError
from .stability import interval_stream, zero_order_violation

FSR, SSR, TFI, TFP = "fsr", "ssr", "tfi", "tfp"


@dataclass(frozen=True)
class ReconMethod:
    kind: str
    window: int | None = None

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in (FSR, SSR, TFI, TFP):
            raise ValidationError(f"unknown reconstruction method {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == TFP:
            if self.window is None or int(self.window) < 1:
                raise ValidationError(f"TFP window must be >= 1, got {self.window}")
            object.__setattr__(self, "window", int(self.window))
        elif self.window is not None:
            raise ValidationError(f"{kind} takes no window")

    @classmethod
    def parse(cls, text: str, window: int | None = None) -> ReconMethod:
        """Accept ``fsr``, ``ssr``, ``tfi``, ``tfp`` (with ``window``) or ``tfp-32`` / ``tfp32`` / ``tfp:32``."""
        if isinstance(text, ReconMethod):
            return text
        m = re.fullmatch(r"\s*([a-zA-Z]+)[-:]?(\d+)?\s*", text)
        if not m:
            raise ValidationError(f"unknown reconstruction method {text!r}")
        kind, num = m.group(1).lower(), m.group(2)
        if num is not None:
            if kind != TFP:
                raise ValidationError(f"unknown reconstruction method {text!r}")
            window = int(num)
        if kind == TFP and window is None:
            window = 32
        return cls(kind, window if kind == TFP else None)

    def __str__(self):
        return f"tfp-{self.window}" if self.kind == TFP else self.kind


# ---------------------------------------------------------------- segmentation


def _fsr_runs(t: list[int]) -> list[tuple[int, int]]:
    runs = []
    start = 0
    lo = hi = None
    for i, v in enumerate(t):
        if lo is None:
            lo = hi = v
            continue
        if lo == hi and abs(v - lo) == 1:
            lo, hi = min(lo, v), max(lo, v)
        elif v != lo and v != hi:
            runs.append((start, i))
            start = i
            lo = hi = v
    if t:
        runs.append((start, len(t)))
    return runs


def _first_second_level_break(run: list[int]) -> int | None:
    """Earliest index in ``run`` that closes an unstable second-level interval."""
    arr = np.asarray(run)
    best = None
    for value in np.unique(arr):
        pos = np.flatnonzero(arr == value)
        bad = zero_order_violation(np.diff(pos))
        if bad is not None:
            cut = int(pos[bad + 1])
            best = cut if best is None else min(best, cut)
    return best


def _ssr_runs(t: list[int]) -> list[tuple[int, int]]:
    runs = []
    for a, b in _fsr_runs(t):
        s = a
        while s < b:
            cut = _first_second_level_break(t[s:b])
            if cut is None:
                runs.append((s, b))
                break
            runs.append((s, s + cut))
            s += cut
    return runs


def segment_intensity(segment: Segment) -> float:
    """``255 / mean interval`` of a non-degenerate segment."""
    iv = segment.intervals.intervals
    if iv.size == 0:
        raise ValidationError("degenerate segment has no interval to invert")
    return 255.0 * iv.size / int(iv.sum())


def _segments(stream: SpikeLikeStream, runs_of) -> list[Segment]:
    frames = len(stream)
    pos = stream.firing_positions()
    if frames == 0:
        return []
    if pos.size < 2:
        return [Segment(0, frames, IntervalStream(), 0.0)]
    t = np.diff(pos).tolist()
    segments = [Segment(0, int(pos[0]) + 1, IntervalStream(), 0.0)]
    carry = 0.0
    for a, b in runs_of(t):
        iv = IntervalStream(np.asarray(t[a:b], dtype=np.int64))
        carry = 255.0 * (b - a) / sum(t[a:b])
        segments.append(Segment(int(pos[a]) + 1, int(pos[b]) + 1, iv, carry))
    if pos[-1] + 1 < frames:
        segments.append(Segment(int(pos[-1]) + 1, frames, IntervalStream(), carry))
    return segments


def segment_fsr(stream: SpikeLikeStream) -> list[Segment]:
    """First-order stability segmentation of one spike stream.

    Segments tile ``[0, len(stream))``. The first and, when the stream does
    not end on a spike, the last segment are degenerate.
    """
    return _segments(stream, _fsr_runs)


def segment_ssr(stream: SpikeLikeStream) -> list[Segment]:
    """Second-order refinement of :func:`segment_fsr`."""
    return _segments(stream, _ssr_runs)


def segments_to_frames(segments: list[Segment], frames: int | None = None) -> np.ndarray:
    """Expand segments to one intensity per frame."""
    end = segments[-1].end_frame if segments else 0
    out = np.zeros(end if frames is None else frames)
    for s in segments:
        out[s.start_frame : s.end_frame] = s.intensity
    return out


def first_level_intervals(stream: SpikeLikeStream) -> IntervalStream:
    return interval_stream(stream)


# ---------------------------------------------------------------- streaming


class SegmentEvent(NamedTuple):
    """A closed stable run: first frame it explains, its length, its intensity."""

    start_frame: int
    duration: int
    intensity: float


@dataclass
class PixelReconState:
    """Frame-at-a-time FSR state for a single pixel.

    Mirrors a hardware stability unit: it holds the accepted interval pair,
    the running interval sum and count, and emits a :class:`SegmentEvent`
    when an arriving interval breaks the pair.
    """

    pending_pair: tuple[int, int] | None = None
    interval_sum: int = 0
    interval_count: int = 0
    frames_since_last_spike: int | None = None
    last_intensity: float = 0.0
    frame: int = 0
    run_start: int = 0

    def __post_init__(self):
        if self.pending_pair is not None and self.pending_pair[1] - self.pending_pair[0] not in (0, 1):
            raise ValidationError(f"pending pair {self.pending_pair} is not zero-order stable")
        if self.interval_sum < self.interval_count:
            raise ValidationError("interval_sum must be >= interval_count")

    def _close(self) -> SegmentEvent:
        value = 255.0 * self.interval_count / self.interval_sum
        ev = SegmentEvent(self.run_start, self.interval_sum, value)
        self.last_intensity = value
        self.run_start += self.interval_sum
        self.interval_sum = 0
        self.interval_count = 0
        return ev

    def push(self, bit: int) -> SegmentEvent | None:
        n = self.frame
        self.frame += 1
        if self.frames_since_last_spike is not None:
            self.frames_since_last_spike += 1
        if not bit:
            return None
        if self.frames_since_last_spike is None:
            self.frames_since_last_spike = 0
            self.run_start = n + 1
            return None
        t = self.frames_since_last_spike
        self.frames_since_last_spike = 0
        event = None
        pair = self.pending_pair
        if pair is None:
            pair = (t, t)
        elif pair[0] == pair[1] and abs(t - pair[0]) == 1:
            pair = (min(t, pair[0]), max(t, pair[0]))
        elif t not in pair:
            event = self._close()
            pair = (t, t)
        self.pending_pair = pair
        self.interval_sum += t
        self.interval_count += 1
        return event

    def flush(self) -> SegmentEvent | None:
        """Emit the open run, once; later calls return None."""
        if self.interval_count == 0:
            return None
        return self._close()


def push_frame(state: PixelReconState, bit: int) -> SegmentEvent | None:
    return state.push(bit)


def flush(state: PixelReconState) -> SegmentEvent | None:
    return state.flush()


def stream_events(stream: SpikeLikeStream, block: int | None = None) -> list[SegmentEvent]:
    """Run a fresh :class:`PixelReconState` over ``stream`` (optionally in blocks) and flush."""
    state = PixelReconState()
    bits = (stream.values == stream.firing_value).astype(np.uint8).tolist()
    step = block or max(1, len(bits))
    events = []
    for i in range(0, len(bits), step):
        for b in bits[i : i + step]:
            ev = state.push(b)
            if ev is not None:
                events.append(ev)
    tail = state.flush()
    if tail is not None:
        events.append(tail)
    return events


def segment_events(segments: list[Segment]) -> list[SegmentEvent]:
    """The non-degenerate segments as events, for comparison with streaming output."""
    return [SegmentEvent(s.start_frame, s.duration, s.intensity) for s in segments if not s.degenerate]


# ---------------------------------------------------------------- volumes


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


@contextmanager
def worker_threads(workers: int | None):
    """Pin the compiled kernels to ``workers`` threads for the duration of the block."""
    if workers is None:
        yield numba.get_num_threads()
        return
    workers = max(1, min(int(workers), numba.config.NUMBA_NUM_THREADS))
    previous = numba.get_num_threads()
    numba.set_num_threads(workers)
    try:
        yield workers
    finally:
        numba.set_num_threads(previous)


@dataclass(frozen=True, eq=False)
class Reconstruction:
    """Per-frame intensities of a whole volume, ``values[y, x, n]``.

    Behaves as a sequence of :class:`IntensityImage`, one per frame.
    """

    values: np.ndarray = field(repr=False)
    method: ReconMethod

    def __len__(self):
        return self.values.shape[2]

    def __getitem__(self, n: int) -> IntensityImage:
        if not -len(self) <= n < len(self):
            raise IndexError(n)
        return IntensityImage(self.values[:, :, n])

    def __iter__(self) -> Iterator[IntensityImage]:
        for n in range(len(self)):
            yield self[n]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def reconstruct(volume: SpikeVolume, method, workers: int | None = None) -> Reconstruction:
    """Reconstruct every frame of ``volume``.

    ``workers`` bounds the kernel threads; results do not depend on it.
    """
    method = ReconMethod.parse(method) if isinstance(method, str) else method
    if not isinstance(method, ReconMethod):
        raise ValidationError(f"unknown reconstruction method {method!r}")
    bits = volume.pixel_major()
    out = np.zeros(bits.shape, dtype=np.float64)
    with worker_threads(workers):
        if method.kind in (FSR, SSR):
            _kernels.stability_frames(bits, method.kind == SSR, out)
        elif method.kind == TFI:
            _kernels.tfi_frames(bits, out)
        else:
            _kernels.tfp_frames(bits, method.window, out)
    values = out.reshape(volume.height, volume.width, volume.frames)
    values.setflags(write=False)
    return Reconstruction(values, method)


def reconstruct_stream(stream: SpikeLikeStream, method) -> np.ndarray:
    """Per-frame reconstruction of a single pixel stream via the compiled kernels."""
    bits = (stream.values == stream.firing_value).astype(np.uint8)
    vol = SpikeVolume(bits[None, None, :])
    return np.array(reconstruct(vol, method, workers=1).values[0, 0])


class StreamingReconstructor:
    """Block-at-a-time FSR/SSR over a whole sensor.

    Frames arrive in blocks (32 frames in the hardware regime); per-pixel
    state carries across blocks, so any blocking yields the same events as
    one pass over the whole stream. Events are ``(pixel, start, duration,
    intensity)`` rows with ``pixel = y * width + x``.
    """

    def __init__(self, width: int, height: int, method="fsr", workers: int | None = None):
        self.method = ReconMethod.parse(method) if isinstance(method, str) else method
        if self.method.kind not in (FSR, SSR):
            raise ValidationError("streaming reconstruction supports fsr and ssr only")
        self.width, self.height = width, height
        self.workers = workers
        self.frames_seen = 0
        self._state, self._carry = _kernels.new_state(width * height)
        self._flushed = False

    def _collect(self, ev: np.ndarray, counts: np.ndarray, stride: int) -> np.ndarray:
        total = int(counts.sum())
        result = np.empty((total, 4))
        if total == 0:
            return result
        pix = np.repeat(np.arange(counts.size), counts)
        slot = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        rows = ev[pix * stride + slot]
        result[:, 0] = pix
        result[:, 1] = rows[:, 0]
        result[:, 2] = rows[:, 1] - rows[:, 0]
        result[:, 3] = rows[:, 2]
        return result

    def push_block(self, block) -> np.ndarray:
        """Consume ``(height, width, frames)`` bits; returns the runs closed by them."""
        if self._flushed:
            raise ValidationError("reconstructor already flushed")
        if isinstance(block, SpikeVolume):
            block = block.bits
        block = np.asarray(block, dtype=np.uint8)
        if block.shape[:2] != (self.height, self.width):
            raise ValidationError(f"block shaped {block.shape} does not match {self.width}x{self.height}")
        n_frames = block.shape[2]
        bits = np.ascontiguousarray(block.reshape(-1, n_frames))
        stride = n_frames + 1
        ev = np.empty((bits.shape[0] * stride, 3))
        counts = np.zeros(bits.shape[0], dtype=np.int64)
        with worker_threads(self.workers):
            _kernels.stability_events(
                bits, self.frames_seen, self._state, self._carry, self.method.kind == SSR, ev, counts
            )
        self.frames_seen += n_frames
        return self._collect(ev, counts, stride)

    def flush(self) -> np.ndarray:
        """Close every open run. Further pushes are rejected."""
        if self._flushed:
            return np.empty((0, 4))
        ev = np.empty((self._state.shape[0], 3))
        counts = np.zeros(self._state.shape[0], dtype=np.int64)
        _kernels.flush_events(self._state, self._carry, ev, counts)
        self._flushed = True
        return self._collect(ev, counts, 1)


def pixel_records(volume: SpikeVolume, method="fsr", block: int = 32) -> list[list[tuple[int, float]]]:
    """Full-coverage ``(duration, intensity)`` runs for every pixel, row-major.

    Closed runs come from :class:`StreamingReconstructor`; the span before
    the first run reads 0 and the span after the last run carries its value.
    """
    rec = StreamingReconstructor(volume.width, volume.height, method, workers=None)
    chunks = [rec.push_block(volume.bits[:, :, i : i + block]) for i in range(0, volume.frames, block)]
    chunks.append(rec.flush())
    events = np.concatenate(chunks) if chunks else np.empty((0, 4))
    order = np.lexsort((events[:, 1], events[:, 0]))
    events = events[order]
    n_pix = volume.width * volume.height
    bounds = np.searchsorted(events[:, 0], np.arange(n_pix + 1))
    frames = volume.frames
    records = []
    for p in range(n_pix):
        rows = events[bounds[p] : bounds[p + 1]]
        runs: list[tuple[int, float]] = []
        if frames == 0:
            records.append(runs)
            continue
        if rows.shape[0] == 0:
            records.append([(frames, 0.0)])
            continue
        first = int(rows[0, 1])
        if first > 0:
            runs.append((first, 0.0))
        runs.extend((int(d), float(v)) for d, v in zip(rows[:, 2], rows[:, 3]))
        end = int(rows[-1, 1] + rows[-1, 2])
        if end < frames:
            runs.append((frames - end, float(rows[-1, 3])))
        records.append(runs)
    return records
