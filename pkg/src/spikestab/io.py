"""Spike and record files, plus 8-bit image export.

SPK1 layout (all little-endian)::

    offset  size  field
    0       4     magic b"SPK1"
    4       2     width  (u16)
    6       2     height (u16)
    8       4     fps    (u32)
    12      4     frame_count (u32)
    16      ...   frame_count frames of ceil(width*height/8) bytes

Pixel ``p = y * width + x`` of a frame lives in byte ``p // 8``, bit
``p % 8`` (least-significant bit first); pad bits are zero. A raw camera
dump is the same frame payload with no header.

SPKR layout: the same 16-byte header with magic b"SPKR", then for each
pixel in row-major order a u32 word count followed by that many u16 record
words (see ``codec``).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .core import IntensityImage, SpikeStabError, SpikeVolume, ValidationError, quantize

SPK_MAGIC = b"SPK1"
SPKR_MAGIC = b"SPKR"
HEADER = struct.Struct("<4sHHII")
DEFAULT_FPS = 20000
DEFAULT_WIDTH, DEFAULT_HEIGHT = 400, 250


class SpikeIOError(SpikeStabError, OSError):
    """Reading or writing a file failed; the message names the path."""


class FormatError(SpikeStabError, ValueError):
    """File content does not match the expected container."""


class LengthError(FormatError):
    """Payload shorter or longer than the header promises."""


class GeometryError(FormatError):
    """Raw file size is not a whole number of frames for the given geometry."""


@dataclass(frozen=True)
class SpkHeader:
    magic: bytes
    width: int
    height: int
    fps: int = DEFAULT_FPS
    frame_count: int = 0

    def __post_init__(self):
        if self.magic not in (SPK_MAGIC, SPKR_MAGIC):
            raise FormatError(f"bad magic {self.magic!r}")
        if not (1 <= self.width <= 0xFFFF and 1 <= self.height <= 0xFFFF):
            raise ValidationError(f"geometry {self.width}x{self.height} must be 1..65535 per side")
        if not (0 <= self.fps <= 0xFFFFFFFF and 0 <= self.frame_count <= 0xFFFFFFFF):
            raise ValidationError("fps and frame_count must fit 32 bits")

    @property
    def frame_bytes(self) -> int:
        return frame_bytes(self.width, self.height)

    def pack(self) -> bytes:
        return HEADER.pack(self.magic, self.width, self.height, self.fps, self.frame_count)

    @classmethod
    def unpack(cls, data: bytes, expect: bytes = SPK_MAGIC) -> SpkHeader:
        if len(data) < HEADER.size:
            raise LengthError(f"header needs {HEADER.size} bytes, got {len(data)}")
        magic, w, h, fps, n = HEADER.unpack_from(data)
        if magic != expect:
            raise FormatError(f"bad magic {magic!r}, expected {expect!r}")
        return cls(magic, w, h, fps, n)


def frame_bytes(width: int, height: int) -> int:
    return (width * height + 7) // 8


def pack_frames(volume: SpikeVolume, msb_first: bool = False) -> bytes:
    """Frame payload without a header."""
    frames = volume.to_frames().reshape(volume.frames, volume.width * volume.height)
    order = "big" if msb_first else "little"
    return np.packbits(frames, axis=1, bitorder=order).tobytes()


def unpack_frames(payload: bytes, width: int, height: int, frames: int, msb_first: bool = False) -> SpikeVolume:
    nbytes = frame_bytes(width, height)
    raw = np.frombuffer(payload, dtype=np.uint8, count=frames * nbytes).reshape(frames, nbytes)
    order = "big" if msb_first else "little"
    bits = np.unpackbits(raw, axis=1, count=width * height, bitorder=order)
    return SpikeVolume.from_frames(bits.reshape(frames, height, width))


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise SpikeIOError(f"cannot read {path}: {e.strerror or e}") from e


def _write(path, data: bytes):
    try:
        Path(path).write_bytes(data)
    except OSError as e:
        raise SpikeIOError(f"cannot write {path}: {e.strerror or e}") from e


def write_spk(volume: SpikeVolume, path, fps: int = DEFAULT_FPS):
    header = SpkHeader(SPK_MAGIC, volume.width, volume.height, int(fps), volume.frames)
    _write(path, header.pack() + pack_frames(volume))


def read_spk(path) -> tuple[SpikeVolume, int]:
    """Load an SPK1 file; returns ``(volume, fps)``."""
    data = _read(path)
    header = SpkHeader.unpack(data)
    expected = HEADER.size + header.frame_count * header.frame_bytes
    if len(data) != expected:
        raise LengthError(f"{path}: expected {expected} bytes for {header.frame_count} frames, got {len(data)}")
    volume = unpack_frames(data[HEADER.size :], header.width, header.height, header.frame_count)
    return volume, header.fps


def read_raw(path, width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT, msb_first: bool = False) -> SpikeVolume:
    """Load a headerless dump; the frame count follows from the file size."""
    data = _read(path)
    nbytes = frame_bytes(width, height)
    if len(data) % nbytes:
        suggestions = _suggest_geometries(len(data))
        if suggestions:
            hint = f"; geometries that fit: {', '.join(suggestions)}"
        else:
            whole = len(data) // nbytes
            hint = f"; no common geometry fits, nearest whole sizes are {whole * nbytes} and {(whole + 1) * nbytes} bytes"
        raise GeometryError(
            f"{path}: {len(data)} bytes is not a multiple of the {nbytes}-byte frame for {width}x{height}{hint}"
        )
    return unpack_frames(data, width, height, len(data) // nbytes, msb_first)


_COMMON_GEOMETRIES = ((400, 250), (250, 400), (256, 256), (128, 128), (640, 480), (346, 260), (1000, 1000))


def _suggest_geometries(size: int) -> list[str]:
    return [f"{w}x{h}" for w, h in _COMMON_GEOMETRIES if size and size % frame_bytes(w, h) == 0]


def write_raw(volume: SpikeVolume, path, msb_first: bool = False):
    _write(path, pack_frames(volume, msb_first))


def read_volume(path, width: int | None = None, height: int | None = None, msb_first: bool = False):
    """SPK1 when the magic matches, otherwise a raw dump with the given geometry."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == SPK_MAGIC and width is None and height is None:
        return read_spk(path)
    return read_raw(path, width or DEFAULT_WIDTH, height or DEFAULT_HEIGHT, msb_first), DEFAULT_FPS


def write_spkr(path, pixel_words: Sequence[np.ndarray], width: int, height: int, frame_count: int, fps: int = DEFAULT_FPS):
    """Write per-pixel record words (row-major pixels)."""
    if len(pixel_words) != width * height:
        raise ValidationError(f"expected {width * height} pixel record lists, got {len(pixel_words)}")
    parts = [SpkHeader(SPKR_MAGIC, width, height, int(fps), int(frame_count)).pack()]
    for words in pixel_words:
        w = np.asarray(words, dtype="<u2")
        parts.append(struct.pack("<I", w.size))
        parts.append(w.tobytes())
    _write(path, b"".join(parts))


def read_spkr(path) -> tuple[SpkHeader, list[np.ndarray]]:
    data = _read(path)
    header = SpkHeader.unpack(data, expect=SPKR_MAGIC)
    off = HEADER.size
    pixels = []
    for p in range(header.width * header.height):
        if off + 4 > len(data):
            raise LengthError(f"{path}: truncated before the record count of pixel {p}")
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        end = off + 2 * count
        if end > len(data):
            raise LengthError(f"{path}: pixel {p} needs {2 * count} record bytes, {len(data) - off} remain")
        pixels.append(np.frombuffer(data, dtype="<u2", count=count, offset=off).astype(np.uint16))
        off = end
    if off != len(data):
        raise LengthError(f"{path}: {len(data) - off} trailing bytes after the last pixel")
    return header, pixels


def write_image(image: IntensityImage, path, format: str | None = None):
    """8-bit grayscale PGM (P5) or PNG; format defaults to the file suffix."""
    fmt = (format or Path(path).suffix.lstrip(".") or "pgm").lower()
    values = image.values if isinstance(image, IntensityImage) else np.asarray(image)
    q = quantize(values)
    if fmt == "pgm":
        h, w = q.shape
        _write(path, f"P5\n{w} {h}\n255\n".encode("ascii") + q.tobytes())
    elif fmt == "png":
        try:
            Image.fromarray(q, mode="L").save(path, format="PNG")
        except OSError as e:
            raise SpikeIOError(f"cannot write {path}: {e}") from e
    else:
        raise ValidationError(f"unsupported image format {fmt!r}; use pgm or png")


def read_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"))
    except OSError as e:
        raise SpikeIOError(f"cannot read {path}: {e}") from e


def ensure_dir(path) -> Path:
    p = Path(path)
    try:
        os.makedirs(p, exist_ok=True)
    except OSError as e:
        raise SpikeIOError(f"cannot create {path}: {e.strerror or e}") from e
    return p
