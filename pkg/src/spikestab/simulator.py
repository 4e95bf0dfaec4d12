"""Discrete integrate-and-fire spike generation.

Each step adds the step's accumulation ``Q`` to the integrator; when the
status reaches the threshold a spike is read out and the threshold is
subtracted (the residual carries over). ``Q`` never exceeds the threshold,
so at most one spike fires per readout.

The threshold comparison allows a relative slack of ``FIRE_TOLERANCE``.
Without it, decimal rates such as 0.3 lose the exact-arithmetic firing step
to binary rounding (ten additions of 0.3 land just below 3.0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import IntensityImage, SpikeLikeStream, SpikeVolume, ValidationError
from .scenes import SceneSpec

FIRE_TOLERANCE = 1e-9

# elements per simulation band; bounds peak memory for large scenes
_BAND_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class IntegratorState:
    """Post-reset integrator status at a readout boundary."""

    residual: float = 0.0
    threshold: float = 1.0

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValidationError(f"threshold must be > 0, got {self.threshold}")
        if not (0.0 <= self.residual < self.threshold):
            raise ValidationError(f"residual {self.residual} outside [0, {self.threshold})")


@dataclass(frozen=True)
class NoiseSpec:
    """Readout bit flips plus multiplicative per-step rate jitter."""

    flip_probability: float = 0.0
    rate_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.flip_probability < 0.5):
            raise ValidationError(f"flip_probability must be in [0, 0.5), got {self.flip_probability}")
        if self.rate_jitter < 0:
            raise ValidationError(f"rate_jitter must be >= 0, got {self.rate_jitter}")


@njit(cache=True)
def _integrate(rates, threshold, residual, out):
    # rates (N, T) float64; residual (N,) updated in place; out (N, T) uint8
    slack = threshold * FIRE_TOLERANCE
    n_pix, n_steps = rates.shape
    for i in range(n_pix):
        r = residual[i]
        for n in range(n_steps):
            v = r + rates[i, n]
            if v >= threshold - slack:
                out[i, n] = 1
                r = v - threshold
                if r < 0.0:
                    r = 0.0
            else:
                out[i, n] = 0
                r = v
        residual[i] = r


def _check_threshold(threshold: float):
    if not threshold > 0:
        raise ValidationError(f"threshold must be > 0, got {threshold}")


def step(state: IntegratorState, q: float) -> tuple[int, IntegratorState]:
    """Advance one readout; returns ``(bit, new_state)``."""
    rates = np.array([[float(q)]])
    if not (0.0 <= q <= state.threshold):
        raise ValidationError(f"rate {q} outside [0, {state.threshold}]")
    residual = np.array([state.residual])
    out = np.zeros((1, 1), dtype=np.uint8)
    _integrate(rates, float(state.threshold), residual, out)
    return int(out[0, 0]), IntegratorState(float(residual[0]), state.threshold)


def simulate_pixel(rates, threshold: float = 1.0, initial_residual: float = 0.0) -> SpikeLikeStream:
    """Spike stream of one pixel driven by the per-step rates ``rates``."""
    _check_threshold(threshold)
    q = np.asarray(rates, dtype=np.float64).ravel()
    if q.size:
        bad = np.flatnonzero((q < 0) | (q > threshold) | ~np.isfinite(q))
        if bad.size:
            i = int(bad[0])
            raise ValidationError(
                f"rate {q[i]} at step {i} outside [0, {threshold}]; a binary readout fires at most once per step"
            )
    if not (0.0 <= initial_residual < threshold):
        raise ValidationError(f"initial residual {initial_residual} outside [0, {threshold})")
    out = np.zeros((1, q.size), dtype=np.uint8)
    _integrate(q[None, :], float(threshold), np.array([float(initial_residual)]), out)
    return SpikeLikeStream(out[0], 1, 0)


def constant_stream(q: float, frames: int, threshold: float = 1.0, initial_residual: float = 0.0) -> SpikeLikeStream:
    return simulate_pixel(np.full(frames, float(q)), threshold, initial_residual)


def pixel_rng(seed: int, x: int, y: int, purpose: int) -> np.random.Generator:
    """Independent generator for one pixel; independent of how pixels are sharded."""
    return np.random.default_rng([int(seed), int(y), int(x), int(purpose)])


_PHASE, _NOISE = 0, 1


def simulate_scene(
    scene: SceneSpec,
    frames: int,
    threshold: float = 1.0,
    noise: NoiseSpec | None = None,
    initial_residual: float | str = 0.0,
    seed: int = 0,
) -> SpikeVolume:
    """Simulate every pixel of ``scene`` for ``frames`` readouts.

    ``initial_residual="random"`` draws a uniform power-on residual per pixel
    from ``seed``. Noise draws come from ``noise.seed``; both are keyed by
    pixel coordinates so results do not depend on evaluation order.
    """
    _check_threshold(threshold)
    if frames < 0:
        raise ValidationError(f"frames must be >= 0, got {frames}")
    w, h = scene.width, scene.height
    bits = np.zeros((h, w, frames), dtype=np.uint8)
    if frames == 0:
        return SpikeVolume(bits)

    random_phase = initial_residual == "random"
    if not random_phase and not (0.0 <= float(initial_residual) < threshold):
        raise ValidationError(f"initial residual {initial_residual} outside [0, {threshold})")

    band = max(1, _BAND_ELEMENTS // (w * frames))
    for y0 in range(0, h, band):
        rows = range(y0, min(h, y0 + band))
        rates = scene.rate_block(range(frames), rows)
        bad = (rates < 0) | (rates > threshold) | ~np.isfinite(rates)
        if bad.any():
            yy, xx, nn = (int(v[0]) for v in np.nonzero(bad))
            raise ValidationError(
                f"scene rate {rates[yy, xx, nn]} at pixel ({xx}, {rows[yy]}) frame {nn} outside [0, {threshold}]"
            )
        residual = np.full(len(rows) * w, 0.0 if random_phase else float(initial_residual))
        flips = None
        if random_phase or noise is not None:
            rates = rates.copy()
            flips = np.zeros(rates.shape, dtype=bool)
            for j, y in enumerate(rows):
                for x in range(w):
                    if random_phase:
                        residual[j * w + x] = pixel_rng(seed, x, y, _PHASE).uniform(0.0, threshold)
                    if noise is not None:
                        g = pixel_rng(noise.seed, x, y, _NOISE)
                        if noise.rate_jitter > 0:
                            jitter = 1.0 + noise.rate_jitter * g.standard_normal(frames)
                            rates[j, x] = np.clip(rates[j, x] * jitter, 0.0, threshold)
                        if noise.flip_probability > 0:
                            flips[j, x] = g.random(frames) < noise.flip_probability
        out = np.empty((len(rows) * w, frames), dtype=np.uint8)
        _integrate(rates.reshape(-1, frames), float(threshold), residual, out)
        out = out.reshape(len(rows), w, frames)
        if flips is not None:
            out ^= flips.astype(np.uint8)
        bits[y0 : y0 + len(rows)] = out
    return SpikeVolume(bits)


def ideal_intensity(scene: SceneSpec, n: int, threshold: float = 1.0) -> IntensityImage:
    """Reference frame ``n``: ``255 * Q / threshold``.

    A constant rate ``Q`` settles to a mean interval of ``threshold / Q``, so
    an ideal reconstruction reads back ``255 * Q / threshold``.
    """
    _check_threshold(threshold)
    return IntensityImage(np.clip(255.0 * scene.rate_frame(n) / threshold, 0.0, 255.0))


def ideal_video(scene: SceneSpec, frames: int, threshold: float = 1.0) -> np.ndarray:
    """All reference frames, shaped ``(height, width, frames)`` like a reconstruction."""
    _check_threshold(threshold)
    return np.clip(255.0 * scene.rate_block(range(frames)) / threshold, 0.0, 255.0)
