import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from spikestab.core import IntensityImage, SpikeVolume
from spikestab.io import (
    FormatError,
    GeometryError,
    LengthError,
    SpikeIOError,
    pack_frames,
    read_image,
    read_raw,
    read_spk,
    read_spkr,
    read_volume,
    write_image,
    write_raw,
    write_spk,
    write_spkr,
)


def vol_from_row(bits):
    return SpikeVolume.from_frames(np.array([[bits]], dtype=np.uint8))


def test_bit_layout_examples():
    assert pack_frames(vol_from_row([1, 0])) == b"\x01"
    assert pack_frames(vol_from_row([1] * 9)) == b"\xff\x01"
    assert pack_frames(vol_from_row([0, 0, 0, 0, 0, 0, 0, 0, 0, 1])) == b"\x00\x02"


def test_spk_file_bytes(tmp_path):
    path = tmp_path / "a.spk"
    write_spk(vol_from_row([1, 0]), path, fps=20000)
    assert path.read_bytes() == b"SPK1" + struct.pack("<HHII", 2, 1, 20000, 1) + b"\x01"
    vol, fps = read_spk(path)
    assert fps == 20000
    assert vol.bits[0, :, 0].tolist() == [1, 0]


def test_random_camera_volume_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    vol = SpikeVolume.from_frames(rng.integers(0, 2, (64, 250, 400), dtype=np.uint8))
    write_spk(vol, tmp_path / "v.spk")
    assert read_spk(tmp_path / "v.spk")[0] == vol
    write_raw(vol, tmp_path / "v.raw")
    assert (tmp_path / "v.raw").stat().st_size == 64 * 12500
    assert read_raw(tmp_path / "v.raw") == vol


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(
    arrays(np.uint8, st.tuples(st.integers(0, 6), st.integers(1, 7), st.integers(1, 11)), elements=st.integers(0, 1)),
    st.booleans(),
)
def test_roundtrips(tmp_path, frames, msb):
    vol = SpikeVolume.from_frames(frames)
    write_spk(vol, tmp_path / "h.spk", fps=1234)
    got, fps = read_spk(tmp_path / "h.spk")
    assert got == vol and fps == 1234
    write_raw(vol, tmp_path / "h.raw", msb_first=msb)
    if vol.frames:
        assert read_raw(tmp_path / "h.raw", vol.width, vol.height, msb_first=msb) == vol
    # the SPK1 payload is a valid raw dump
    payload = (tmp_path / "h.spk").read_bytes()[16:]
    (tmp_path / "p.raw").write_bytes(payload)
    assert read_raw(tmp_path / "p.raw", vol.width, vol.height) == vol


def test_pad_bits_are_zero():
    payload = pack_frames(vol_from_row([1] * 9))
    assert payload[1] & 0xFE == 0


def test_msb_first_toggle(tmp_path):
    (tmp_path / "m.raw").write_bytes(b"\x80")
    assert read_raw(tmp_path / "m.raw", 8, 1, msb_first=True).bits[0, :, 0].tolist() == [1] + [0] * 7
    assert read_raw(tmp_path / "m.raw", 8, 1).bits[0, :, 0].tolist() == [0] * 7 + [1]


def test_spk_errors(tmp_path):
    p = tmp_path / "bad.spk"
    p.write_bytes(b"XXXX" + struct.pack("<HHII", 2, 1, 20000, 1) + b"\x01")
    with pytest.raises(FormatError):
        read_spk(p)
    p.write_bytes(b"SPK1" + struct.pack("<HHII", 16, 1, 20000, 3) + b"\x00" * 5)
    with pytest.raises(LengthError, match="expected 22 bytes.*got 21"):
        read_spk(p)
    with pytest.raises(SpikeIOError, match="missing.spk"):
        read_spk(tmp_path / "missing.spk")


def test_raw_geometry(tmp_path):
    p = tmp_path / "d.raw"
    p.write_bytes(bytes(12500))
    assert read_raw(p).frames == 1
    p.write_bytes(bytes(25000))
    assert read_raw(p).frames == 2
    p.write_bytes(bytes(12501))
    with pytest.raises(GeometryError, match="12500"):
        read_raw(p)
    p.write_bytes(bytes(8192 * 3))
    with pytest.raises(GeometryError, match="256x256"):
        read_raw(p)


def test_read_volume_dispatch(tmp_path):
    vol = vol_from_row([1, 0, 1])
    write_spk(vol, tmp_path / "a.spk")
    assert read_volume(tmp_path / "a.spk")[0] == vol
    write_raw(SpikeVolume(np.zeros((250, 400, 2), dtype=np.uint8)), tmp_path / "b.raw")
    assert read_volume(tmp_path / "b.raw")[0].frames == 2


def test_spkr_roundtrip(tmp_path):
    words = [np.array([0x20C8, 0x01FF], dtype=np.uint16), np.array([], dtype=np.uint16), np.array([0xFF49, 0x2D49])]
    write_spkr(tmp_path / "r.spkr", words, 3, 1, frame_count=334, fps=20000)
    data = (tmp_path / "r.spkr").read_bytes()
    assert data[:16] == b"SPKR" + struct.pack("<HHII", 3, 1, 20000, 334)
    assert data[16:24] == struct.pack("<I", 2) + b"\xc8\x20\xff\x01"
    header, got = read_spkr(tmp_path / "r.spkr")
    assert (header.width, header.height, header.frame_count) == (3, 1, 334)
    assert [g.tolist() for g in got] == [w.tolist() for w in words]
    (tmp_path / "t.spkr").write_bytes(data[:-1])
    with pytest.raises(LengthError):
        read_spkr(tmp_path / "t.spkr")
    (tmp_path / "x.spkr").write_bytes(data + b"\x00")
    with pytest.raises(LengthError):
        read_spkr(tmp_path / "x.spkr")
    write_spk(vol_from_row([1]), tmp_path / "a.spk")
    with pytest.raises(FormatError, match="SPKR"):
        read_spkr(tmp_path / "a.spk")


@pytest.mark.parametrize("fmt", ["pgm", "png"])
def test_image_export(tmp_path, fmt):
    img = IntensityImage(np.array([[127.5, 0.0, 255.0], [0.49, 254.5, 12.0]]))
    path = tmp_path / f"i.{fmt}"
    write_image(img, path)
    got = read_image(path)
    np.testing.assert_array_equal(got, [[128, 0, 255], [0, 255, 12]])
    np.testing.assert_array_equal(got, img.quantized())
    with Image.open(path) as im:
        assert im.mode == "L"


def test_pgm_header(tmp_path):
    write_image(IntensityImage.constant(3, 2, 127.5), tmp_path / "c.pgm")
    assert (tmp_path / "c.pgm").read_bytes() == b"P5\n3 2\n255\n" + bytes([128] * 6)


def test_image_errors(tmp_path):
    with pytest.raises(ValueError):
        write_image(IntensityImage.constant(3, 2, 1.0), tmp_path / "c.bmp")
    with pytest.raises(SpikeIOError):
        write_image(IntensityImage.constant(3, 2, 1.0), tmp_path / "nodir" / "c.pgm")
