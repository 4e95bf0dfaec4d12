"""Image quality and throughput measurement."""

from __future__ import annotations

import math
import platform
import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np

from .core import IntensityImage, SpikeVolume, ValidationError, quantize
from .reconstruct import ReconMethod, default_workers, reconstruct, worker_threads


@dataclass(frozen=True)
class MetricReport:
    """Quality (and optionally speed) of one reconstruction.

    ``te`` is the two-dimensional entropy in bits; ``psnr``/``mse`` are
    present only when a reference was available.
    """

    te: float
    psnr: float | None = None
    mse: float | None = None
    throughput: float | None = None

    def __post_init__(self):
        if not self.te >= 0:
            raise ValidationError(f"te must be >= 0, got {self.te}")
        if self.psnr is not None and self.psnr < 0:
            raise ValidationError(f"psnr must be >= 0, got {self.psnr}")

    def as_dict(self) -> dict:
        return asdict(self)


def _as_array(image) -> np.ndarray:
    if isinstance(image, IntensityImage):
        return image.values
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"expected a 2-D image, got shape {arr.shape}")
    return arr


def local_means(g: np.ndarray) -> np.ndarray:
    """Rounded 3x3 mean around each interior pixel of an integer image.

    Rounding is half-up on the exact rational ``sum / 9``.
    """
    s = np.lib.stride_tricks.sliding_window_view(g.astype(np.int64), (3, 3)).sum(axis=(2, 3))
    return (2 * s + 9) // 18


def joint_histogram(image) -> np.ndarray:
    """Counts of (gray value, rounded 3x3 local mean) over interior pixels, shaped (256, 256)."""
    g = quantize(_as_array(image))
    if g.shape[0] < 3 or g.shape[1] < 3:
        raise ValidationError(f"two-dimensional entropy needs at least 3x3 pixels, got {g.shape[1]}x{g.shape[0]}")
    pairs = g[1:-1, 1:-1].astype(np.int64) * 256 + local_means(g)
    return np.bincount(pairs.ravel(), minlength=256 * 256).reshape(256, 256)


def histogram_entropy(counts) -> float:
    """Shannon entropy in bits of the distribution given by ``counts``."""
    c = np.asarray(counts, dtype=np.float64).ravel()
    c = c[c > 0]
    if c.size == 0:
        return 0.0
    p = c / c.sum()
    return float(max(0.0, -(p * np.log2(p)).sum()))


def two_dimensional_entropy(image) -> float:
    """Entropy of the joint (gray value, local mean) distribution, in bits.

    The image is quantized to 8 bits; only interior pixels (those with a full
    3x3 neighbourhood) contribute. Bounded by 16 bits.
    """
    return histogram_entropy(joint_histogram(image))


def mse(image, reference) -> float:
    a, b = _as_array(image), _as_array(reference)
    if a.shape != b.shape:
        raise ValidationError(f"image {a.shape} and reference {b.shape} differ in size")
    return float(np.mean((a - b) ** 2))


def psnr(image, reference) -> float:
    """Peak signal-to-noise ratio for 8-bit range; ``inf`` for identical images."""
    err = mse(image, reference)
    if err == 0:
        return math.inf
    return float(10.0 * math.log10(255.0**2 / err))


def video_psnr(values: np.ndarray, reference: np.ndarray, skip: int = 0) -> float:
    """PSNR over whole ``(H, W, T)`` stacks, ignoring the first ``skip`` frames."""
    a = np.asarray(values, dtype=np.float64)[..., skip:]
    b = np.asarray(reference, dtype=np.float64)[..., skip:]
    if a.shape != b.shape:
        raise ValidationError(f"video {a.shape} and reference {b.shape} differ in size")
    err = float(np.mean((a - b) ** 2))
    return math.inf if err == 0 else float(10.0 * math.log10(255.0**2 / err))


@dataclass(frozen=True)
class BenchResult:
    method: str
    fps: float
    width: int
    height: int
    frames: int
    workers: int
    repeats: int
    seconds: tuple[float, ...]

    def as_dict(self) -> dict:
        d = asdict(self)
        d["seconds"] = list(self.seconds)
        return d


def machine_descriptor() -> dict:
    return {
        "machine": platform.machine(),
        "processor": platform.processor() or platform.machine(),
        "python": platform.python_version(),
        "cpus": default_workers(),
    }


def bench(volume: SpikeVolume, method, repeats: int = 3, workers: int | None = 1) -> BenchResult:
    """Median wall-clock frames per second of ``reconstruct`` over ``repeats`` runs.

    A one-frame warm-up call keeps JIT compilation out of the timings.
    """
    if repeats < 3:
        raise ValidationError(f"repeats must be >= 3, got {repeats}")
    method = ReconMethod.parse(method) if isinstance(method, str) else method
    with worker_threads(workers) as used:
        reconstruct(SpikeVolume.empty(1, 1) if volume.frames == 0 else SpikeVolume(volume.bits[:1, :1, :1]), method)
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            reconstruct(volume, method)
            times.append(time.perf_counter() - t0)
    median = statistics.median(times)
    fps = volume.frames / median if median > 0 else math.inf
    return BenchResult(str(method), fps, volume.width, volume.height, volume.frames, used, repeats, tuple(times))
