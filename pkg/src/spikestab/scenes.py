"""Ground-truth accumulation-rate fields ``Q(x, y, n)``.

A scene returns, for every pixel and step, how much the integrator charges
during that step. The physical picture is ``Q = C * A * dt`` (conversion
coefficient times light intensity times sampling interval); the simulator
only ever consumes the product, so scenes are expressed directly in rate
units relative to the firing threshold.

Scenes evaluate on broadcast coordinate grids, so any rectangular block of
rows and frames can be produced without materialising the whole video.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ValidationError


class SceneSpec:
    """Base class: subclasses implement :meth:`_field` on broadcast grids."""

    width: int
    height: int

    def _check_geometry(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"scene must be at least 1x1, got {self.width}x{self.height}")

    def _field(self, yy: np.ndarray, xx: np.ndarray, nn: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def rate_block(self, frames: range, rows: range | None = None) -> np.ndarray:
        """Rates for ``rows`` x all columns x ``frames``, shaped ``(h, width, f)``."""
        rows = range(self.height) if rows is None else rows
        yy = np.asarray(rows, dtype=np.float64)[:, None, None]
        xx = np.arange(self.width, dtype=np.float64)[None, :, None]
        nn = np.asarray(frames, dtype=np.float64)[None, None, :]
        out = self._field(yy, xx, nn)
        return np.broadcast_to(out, (len(rows), self.width, len(frames))).astype(np.float64)

    def rate_frame(self, n: int) -> np.ndarray:
        return self.rate_block(range(n, n + 1))[:, :, 0]

    def rate(self, x: int, y: int, n: int) -> float:
        return float(self.rate_block(range(n, n + 1), range(y, y + 1))[0, x, 0])

    def max_rate(self) -> float:
        """Upper bound on the field, used to validate against a threshold."""
        raise NotImplementedError


def _as_field(value, width: int, height: int) -> np.ndarray | float:
    if np.ndim(value) == 0:
        return float(value)
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (height, width):
        raise ValidationError(f"rate map must be shaped ({height}, {width}), got {arr.shape}")
    return arr


def _pick(value, yy, xx):
    """Index a scalar-or-map rate with broadcast coordinate grids."""
    if isinstance(value, float):
        return value
    return value[yy.astype(np.intp), xx.astype(np.intp)]


def _max(value) -> float:
    return float(value) if isinstance(value, float) else float(np.max(value))


@dataclass
class ConstantScene(SceneSpec):
    """Static scene; ``q`` is a scalar or a ``(height, width)`` rate map."""

    width: int
    height: int
    q: object = 0.3

    def __post_init__(self):
        self._check_geometry()
        self.q = _as_field(self.q, self.width, self.height)

    def _field(self, yy, xx, nn):
        return _pick(self.q, yy, xx) + 0.0 * nn

    def max_rate(self):
        return _max(self.q)


@dataclass
class MovingBarScene(SceneSpec):
    """Vertical bar sliding right by one pixel every ``frames_per_pixel`` steps.

    The bar wraps around the right edge. ``background`` may be a scalar or a
    static rate map, so texture can be placed behind the bar.
    """

    width: int
    height: int
    q_bar: float = 0.8
    background: object = 0.2
    bar_width: int = 4
    frames_per_pixel: int = 8
    start: int = 0

    def __post_init__(self):
        self._check_geometry()
        if self.bar_width < 1 or self.frames_per_pixel < 1:
            raise ValidationError("bar_width and frames_per_pixel must be >= 1")
        self.background = _as_field(self.background, self.width, self.height)

    def bar_left(self, n) -> np.ndarray:
        return (self.start + np.floor_divide(n, self.frames_per_pixel)) % self.width

    def _field(self, yy, xx, nn):
        offset = (xx - self.bar_left(nn)) % self.width
        inside = offset < self.bar_width
        return np.where(inside, self.q_bar, _pick(self.background, yy, xx) + 0.0 * nn)

    def max_rate(self):
        return max(float(self.q_bar), _max(self.background))


@dataclass
class RotatingWedgeScene(SceneSpec):
    """Bright wedge of half-angle ``half_angle`` rotating about the centre."""

    width: int
    height: int
    q_in: float = 0.8
    q_out: float = 0.2
    half_angle: float = math.pi / 8
    radians_per_frame: float = 2 * math.pi / 512

    def __post_init__(self):
        self._check_geometry()
        if not (0 < self.half_angle <= math.pi):
            raise ValidationError("half_angle must be in (0, pi]")

    def _field(self, yy, xx, nn):
        cy, cx = (self.height - 1) / 2, (self.width - 1) / 2
        theta = np.arctan2(yy - cy, xx - cx)
        diff = np.angle(np.exp(1j * (theta - self.radians_per_frame * nn)))
        return np.where(np.abs(diff) <= self.half_angle, self.q_in, self.q_out)

    def max_rate(self):
        return max(float(self.q_in), float(self.q_out))


@dataclass
class StepScene(SceneSpec):
    """Rate switches from ``q_before`` to ``q_after`` at frame ``switch_frame``."""

    width: int
    height: int
    q_before: object = 0.3
    q_after: object = 0.125
    switch_frame: int = 500

    def __post_init__(self):
        self._check_geometry()
        self.q_before = _as_field(self.q_before, self.width, self.height)
        self.q_after = _as_field(self.q_after, self.width, self.height)

    def _field(self, yy, xx, nn):
        return np.where(nn < self.switch_frame, _pick(self.q_before, yy, xx), _pick(self.q_after, yy, xx))

    def max_rate(self):
        return max(_max(self.q_before), _max(self.q_after))


@dataclass
class ArrayScene(SceneSpec):
    """Scene backed by an explicit ``(height, width, frames)`` rate array.

    Frames past the end of the array repeat the last frame.
    """

    rates: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=np.float64)
        if self.rates.ndim != 3 or self.rates.shape[2] < 1:
            raise ValidationError("rates must be shaped (height, width, frames>=1)")
        self.height, self.width = self.rates.shape[:2]
        self._check_geometry()

    def _field(self, yy, xx, nn):
        n = np.minimum(nn, self.rates.shape[2] - 1)
        return self.rates[yy.astype(np.intp), xx.astype(np.intp), n.astype(np.intp)]

    def max_rate(self):
        return float(self.rates.max())


def gradient_texture(width: int, height: int, lo: float = 0.1, hi: float = 0.6, stripes: int = 3) -> np.ndarray:
    """Smooth static texture: a diagonal ramp modulated by soft vertical stripes."""
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    ramp = (x / max(width - 1, 1) + y / max(height - 1, 1)) / 2
    wave = 0.5 + 0.5 * np.sin(2 * np.pi * stripes * x / width)
    t = 0.6 * ramp + 0.4 * wave
    return lo + (hi - lo) * t


SCENES = {
    "constant": ConstantScene,
    "bar": MovingBarScene,
    "wedge": RotatingWedgeScene,
    "step": StepScene,
}
