"""16-bit run records: (stable duration in frames, 8-bit intensity).

Word layout: duration in the high byte, intensity in the low byte. Runs
longer than 255 frames are split into 255-frame words carrying the same
intensity, remainder last. Intensities are rounded to the nearest integer
with ties away from zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import Segment, SpikeStabError, ValidationError

MAX_DURATION = 255


class MalformedStreamError(SpikeStabError, ValueError):
    """A record stream contains a word that cannot be decoded."""


@dataclass(frozen=True)
class EncodedRecord:
    duration: int
    intensity: int

    def __post_init__(self):
        if not (1 <= self.duration <= MAX_DURATION):
            raise ValidationError(f"record duration {self.duration} outside [1, {MAX_DURATION}]")
        if not (0 <= self.intensity <= 255):
            raise ValidationError(f"record intensity {self.intensity} outside [0, 255]")

    def pack(self) -> int:
        return (self.duration << 8) | self.intensity

    @classmethod
    def unpack(cls, word: int) -> EncodedRecord:
        word = int(word)
        if not 0 <= word <= 0xFFFF:
            raise MalformedStreamError(f"word {word:#x} does not fit 16 bits")
        if word >> 8 == 0:
            raise MalformedStreamError(f"zero-duration word {word:#06x}")
        return cls(word >> 8, word & 0xFF)


def round_intensity(value: float) -> int:
    """Nearest integer, halves away from zero."""
    value = float(value)
    if not (0.0 <= value <= 255.0):
        raise ValidationError(f"intensity {value} outside [0, 255]")
    return int(np.floor(value + 0.5))


def encode(duration: int, intensity: float) -> list[int]:
    """Pack one run into one or more 16-bit words."""
    duration = int(duration)
    if duration < 1:
        raise ValidationError(f"duration must be >= 1, got {duration}")
    level = round_intensity(intensity)
    full, rest = divmod(duration, MAX_DURATION)
    words = [EncodedRecord(MAX_DURATION, level).pack()] * full
    if rest:
        words.append(EncodedRecord(rest, level).pack())
    return words


def encode_runs(runs: Iterable[tuple[int, float]]) -> np.ndarray:
    words: list[int] = []
    for duration, intensity in runs:
        words.extend(encode(duration, intensity))
    return np.asarray(words, dtype=np.uint16)


def encode_segments(segments: Sequence[Segment]) -> np.ndarray:
    return encode_runs((s.duration, s.intensity) for s in segments)


def decode(words) -> np.ndarray:
    """Expand words back to one 8-bit intensity per frame."""
    w = np.asarray(words, dtype=np.int64).ravel()
    if w.size == 0:
        return np.zeros(0, dtype=np.uint8)
    if (w < 0).any() or (w > 0xFFFF).any():
        raise MalformedStreamError("record words must fit 16 bits")
    durations = w >> 8
    if (durations == 0).any():
        i = int(np.flatnonzero(durations == 0)[0])
        raise MalformedStreamError(f"zero-duration word {int(w[i]):#06x} at position {i}")
    return np.repeat((w & 0xFF).astype(np.uint8), durations)


def records(words) -> list[EncodedRecord]:
    return [EncodedRecord.unpack(x) for x in np.asarray(words).ravel()]
