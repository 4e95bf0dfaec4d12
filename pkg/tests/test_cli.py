import json

import numpy as np
import pytest

from spikestab.cli import main
from spikestab.codec import decode
from spikestab.core import SpikeVolume
from spikestab.io import read_image, read_spk, read_spkr, write_raw, write_spk
from spikestab.reconstruct import reconstruct
from spikestab.simulator import simulate_pixel
from spikestab.stability import is_zero_order_stable, interval_stream


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, [json.loads(line) for line in out.out.splitlines() if line.strip()], out.err


@pytest.fixture
def constant_file(tmp_path, capsys):
    code, rows, _ = run(
        capsys, "simulate", "--scene", "constant", "--q", 0.3, "--frames", 1024, "--width", 8, "--height", 6,
        "--output-dir", tmp_path,
    )
    assert code == 0
    return tmp_path / "constant.spk", rows[0]


def test_simulate_constant(constant_file):
    path, row = constant_file
    vol, fps = read_spk(path)
    assert (vol.width, vol.height, vol.frames, fps) == (8, 6, 1024, 20000)
    assert row["reference_dir"].endswith("constant_reference")
    ref = read_image(path.with_name("constant_reference") / "frame_00000.pgm")
    assert (ref == 77).all()  # 76.5 rounds up


def test_simulate_uses_env_output_dir(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SPIKESTAB_OUTPUT_DIR", str(tmp_path))
    code, rows, _ = run(capsys, "simulate", "--scene", "step", "--frames", 16, "--width", 3, "--height", 3, "--no-reference")
    assert code == 0 and (tmp_path / "step.spk").is_file()
    assert rows[0]["reference_dir"] is None


def test_simulate_zero_frames(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--scene", "bar", "--frames", 0, "--width", 4, "--height", 4, "--output-dir", tmp_path)
    assert code == 0
    vol, _ = read_spk(tmp_path / "bar.spk")
    assert vol.frames == 0


def test_simulate_is_deterministic(tmp_path, capsys):
    args = ["simulate", "--scene", "wedge", "--frames", 64, "--width", 16, "--height", 12, "--random-phase",
            "--flip-probability", 0.01, "--seed", 5, "--no-reference"]
    run(capsys, *args, "--out", tmp_path / "a.spk")
    run(capsys, *args, "--out", tmp_path / "b.spk")
    assert (tmp_path / "a.spk").read_bytes() == (tmp_path / "b.spk").read_bytes()


def test_simulate_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--scene", "nope"])
    assert e.value.code == 2
    code, _, err = run(capsys, "simulate", "--scene", "constant", "--q", 1.5, "--frames", 4, "--width", 2, "--height", 2,
                       "--output-dir", tmp_path)
    assert code == 2 and "outside" in err


def test_reconstruct_fsr_constant(constant_file, capsys):
    path, _ = constant_file
    out = path.parent / "fsr"
    code, rows, _ = run(capsys, "reconstruct", path, "--method", "fsr", "--out-dir", out)
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["images"]) == 1024 and manifest["method"] == "fsr"
    # past warm-up every frame is within 1 gray level of 76.5
    for n in range(16, 1024, 37):
        img = read_image(out / f"frame_{n:05d}.pgm").astype(float)
        assert np.all(np.abs(img - 76.5) <= 1.0)


def test_reconstruct_tfp_steady_state(constant_file, capsys):
    path, _ = constant_file
    out = path.parent / "tfp"
    code, _, _ = run(capsys, "reconstruct", path, "--method", "tfp", "--window", 32, "--out-dir", out, "--format", "png")
    assert code == 0
    frames = np.stack([read_image(out / f"frame_{n:05d}.png") for n in range(64, 1024)]).astype(float)
    # the window holds 9 or 10 spikes; the time average is the ideal value up to quantization
    assert abs(frames.mean() - 76.5) <= 1.0
    assert set(np.unique(frames)) <= {72.0, 80.0}


def test_reconstruct_records(constant_file, capsys):
    path, _ = constant_file
    out = path.parent / "rec"
    code, rows, _ = run(capsys, "reconstruct", path, "--emit-records", "--out-dir", out)
    assert code == 0
    header, words = read_spkr(out / "records.spkr")
    vol, _ = read_spk(path)
    batch = reconstruct(vol, "fsr").values.reshape(-1, vol.frames)
    for p, w in enumerate(words):
        assert np.all(np.abs(decode(w) - batch[p]) <= 0.5)
    assert header.frame_count == 1024 and rows[0]["words"] == sum(w.size for w in words)


def test_reconstruct_errors(constant_file, tmp_path, capsys):
    path, _ = constant_file
    assert run(capsys, "reconstruct", path, "--method", "bogus")[0] == 2
    assert run(capsys, "reconstruct", path, "--method", "tfi", "--emit-records")[0] == 2
    assert run(capsys, "reconstruct", tmp_path / "missing.spk")[0] == 3
    (tmp_path / "odd.raw").write_bytes(bytes(101))
    code, _, err = run(capsys, "reconstruct", tmp_path / "odd.raw", "--width", 10, "--height", 10)
    assert code == 3 and "multiple" in err
    bad = tmp_path / "trunc.spk"
    bad.write_bytes(path.read_bytes()[:-3])
    assert run(capsys, "reconstruct", bad)[0] == 3


def test_reconstruct_raw_input(tmp_path, capsys):
    vol = SpikeVolume(np.tile(simulate_pixel(np.full(64, 0.5)).values, (2, 3, 1)))
    write_raw(vol, tmp_path / "d.raw", msb_first=True)
    code, rows, _ = run(capsys, "reconstruct", tmp_path / "d.raw", "--width", 3, "--height", 2, "--msb-first",
                        "--out-dir", tmp_path / "o")
    assert code == 0 and rows[0]["frames"] == 64
    assert (read_image(tmp_path / "o" / "frame_00063.pgm") == 128).all()


def test_verify_default_sweep_passes(capsys):
    code, rows, _ = run(capsys, "verify-stability")
    assert code == 0
    assert rows[-1]["summary"] and rows[-1]["checked"] == 200 and rows[-1]["failures"] == 0


def test_verify_explicit_rates(capsys):
    code, rows, _ = run(capsys, "verify-stability", "--q", 0.3, "--q", 0.7, "--all", "--length", 512)
    assert code == 0
    assert [r["interval_bounds"] for r in rows[:2]] == [[3, 4], [1, 2]]
    assert run(capsys, "verify-stability", "--q", 1.5)[0] == 2


def test_verify_adversarial_file_fails(tmp_path, capsys):
    rates = np.r_[np.full(400, 1 / 3.2), np.full(400, 1 / 3.8)]
    vol = SpikeVolume(simulate_pixel(rates).values[None, None, :])
    write_spk(vol, tmp_path / "adv.spk")
    code, rows, _ = run(capsys, "verify-stability", "--input", tmp_path / "adv.spk")
    assert code == 1
    bad = rows[0]
    assert not bad["ok"] and bad["violation"]["depth"] == 2
    assert 400 <= bad["breakpoint_frame"] <= 450


def test_verify_depth_one_is_zero_order(tmp_path, capsys):
    rng = np.random.default_rng(3)
    bits = (rng.random((3, 4, 120)) < 0.3).astype(np.uint8)
    vol = SpikeVolume(bits)
    write_spk(vol, tmp_path / "r.spk")
    code, rows, _ = run(capsys, "verify-stability", "--input", tmp_path / "r.spk", "--depth", 1, "--all")
    for r in rows[:-1]:
        s1 = interval_stream(bits[r["y"], r["x"]], firing=1)
        assert r["ok"] == is_zero_order_stable(s1)
    assert (code == 0) == all(r["ok"] for r in rows[:-1])


def test_bench_rows(tmp_path, capsys):
    code, rows, err = run(capsys, "bench", "--width", 40, "--height", 25, "--frames", 64, "--repeats", 3)
    assert code == 0
    assert "machine" in rows[0]
    methods = [r["method"] for r in rows[1:]]
    assert methods == ["fsr", "ssr", "tfi", "tfp-32"]
    assert all(r["fps"] > 0 and r["workers"] == 1 for r in rows[1:])
    assert "frames/s" in err
    assert run(capsys, "bench", "--repeats", 1)[0] == 2


def test_bench_worker_sweep(capsys):
    code, rows, _ = run(capsys, "bench", "--width", 20, "--height", 10, "--frames", 32, "--methods", "fsr",
                        "--sweep-workers", "1,2", "--quiet")
    assert code == 0 and len(rows) == 3


def test_compare_constant_scene(tmp_path, capsys):
    # integer period: every method settles on exactly 255 * 0.5
    run(capsys, "simulate", "--scene", "constant", "--q", 0.5, "--frames", 256, "--width", 6, "--height", 5,
        "--output-dir", tmp_path)
    code, rows, _ = run(capsys, "compare", tmp_path / "constant.spk", "--reference-dir", tmp_path / "constant_reference",
                        "--skip", 64, "--psnr")
    assert code == 0
    assert [r["method"] for r in rows] == ["fsr", "ssr", "tfi", "tfp-32"]
    for r in rows:
        assert r["te"] == 0.0
        # 127.5 quantizes to the reference's 128 everywhere past warm-up
        assert r["psnr"] == "inf" and r["mse"] == 0.0


def test_time_average_matches_reference_at_fractional_period(constant_file):
    path, _ = constant_file
    vol, _ = read_spk(path)
    for method in ("fsr", "ssr", "tfp-32"):
        values = reconstruct(vol, method).values[:, :, 64:]
        assert np.all(np.abs(values.mean(axis=2) - 76.5) <= 1.0)
    # TFI shows each interval during the following one, so its time average is biased at a 3,3,4 cycle
    tfi = reconstruct(vol, "tfi").values[:, :, 64:]
    assert set(np.unique(tfi)) == {63.75, 85.0}


def test_compare_bar_scene_orders_methods(tmp_path, capsys):
    run(capsys, "simulate", "--scene", "bar", "--texture", "--frames", 256, "--width", 48, "--height", 16,
        "--random-phase", "--output-dir", tmp_path)
    code, rows, _ = run(capsys, "compare", tmp_path / "bar.spk", "--reference-dir", tmp_path / "bar_reference",
                        "--skip", 64, "--psnr")
    assert code == 0
    by = {r["method"]: r for r in rows}
    assert by["fsr"]["psnr"] > by["tfp-32"]["psnr"]


def test_compare_errors(constant_file, tmp_path, capsys):
    path, _ = constant_file
    code, _, err = run(capsys, "compare", path, "--psnr")
    assert code == 2 and "reference" in err
    assert run(capsys, "compare", path, "--reference-dir", tmp_path / "none")[0] == 3
