"""Command-line entry point.

Every command prints JSON lines on stdout (one object per result row) so
runs can be parsed; human-readable tables go to stderr. Exit codes: 0 ok,
1 verification failure, 2 usage error, 3 I/O or format error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io as spkio
from .codec import encode_runs
from .core import SpikeStabError, SpikeVolume, ValidationError, pixel_stream
from .metrics import MetricReport, bench, machine_descriptor, two_dimensional_entropy
from .reconstruct import FSR, SSR, ReconMethod, pixel_records, reconstruct, worker_threads
from .scenes import SCENES, ConstantScene, MovingBarScene, RotatingWedgeScene, StepScene, gradient_texture
from .simulator import NoiseSpec, constant_stream, ideal_intensity, simulate_scene
from .stability import (
    check_lemma2,
    lemma1_interval_bounds,
    stability_order,
    sweep_rates,
    violation_frame,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
OUTPUT_ENV = "SPIKESTAB_OUTPUT_DIR"
FRAME_NAME = "frame_{:05d}.{}"
DEFAULT_METHODS = "fsr,ssr,tfi,tfp-32"


class UsageError(SpikeStabError):
    pass


def _emit(obj: dict):
    print(json.dumps(obj, default=_json_default), flush=True)


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, Path):
        return str(x)
    raise TypeError(type(x).__name__)


def _finite(x: float | None):
    # JSON has no infinity; identical images report the string "inf"
    if x is None or math.isfinite(x):
        return x
    return "inf" if x > 0 else "-inf"


def _output_dir(args) -> Path:
    return Path(args.output_dir or os.environ.get(OUTPUT_ENV) or ".")


def _methods(text: str, window: int | None = None) -> list[ReconMethod]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if part:
            try:
                out.append(ReconMethod.parse(part, window))
            except ValidationError as e:
                raise UsageError(str(e)) from e
    if not out:
        raise UsageError("no methods given")
    return out


def _load(args) -> tuple[SpikeVolume, int]:
    path = Path(args.input)
    if not path.is_file():
        raise spkio.SpikeIOError(f"cannot read {path}: no such file")
    return spkio.read_volume(path, args.width, args.height, args.msb_first)


# ---------------------------------------------------------------- simulate


def _scene(args):
    w, h = args.width, args.height
    background = gradient_texture(w, h) if args.texture else args.background
    if args.scene == "constant":
        return ConstantScene(w, h, gradient_texture(w, h) if args.texture else args.q)
    if args.scene == "bar":
        return MovingBarScene(w, h, args.q_bar, background, args.bar_width, args.frames_per_pixel)
    if args.scene == "wedge":
        return RotatingWedgeScene(w, h, args.q_bar, args.background)
    return StepScene(w, h, args.q_before, args.q_after, args.switch_frame)


def cmd_simulate(args) -> int:
    if args.frames < 0:
        raise UsageError(f"--frames must be >= 0, got {args.frames}")
    scene = _scene(args)
    noise = None
    if args.flip_probability > 0 or args.rate_jitter > 0:
        noise = NoiseSpec(args.flip_probability, args.rate_jitter, args.seed)
    phase = "random" if args.random_phase else 0.0
    with worker_threads(args.workers):
        volume = simulate_scene(scene, args.frames, args.threshold, noise, phase, args.seed)

    outdir = _output_dir(args)
    out = Path(args.out) if args.out else outdir / f"{args.scene}.spk"
    spkio.ensure_dir(out.parent)
    spkio.write_spk(volume, out, args.fps)

    ref_dir = None
    if not args.no_reference:
        ref_dir = Path(args.reference_dir) if args.reference_dir else out.with_name(out.stem + "_reference")
        spkio.ensure_dir(ref_dir)
        for n in range(args.frames):
            spkio.write_image(ideal_intensity(scene, n, args.threshold), ref_dir / FRAME_NAME.format(n, "pgm"))
    _emit(
        {
            "command": "simulate",
            "scene": args.scene,
            "out": out,
            "width": volume.width,
            "height": volume.height,
            "frames": volume.frames,
            "fps": args.fps,
            "spikes": int(volume.bits.sum(dtype=np.int64)),
            "reference_dir": ref_dir,
            "seed": args.seed,
        }
    )
    return EXIT_OK


# ---------------------------------------------------------------- reconstruct


def cmd_reconstruct(args) -> int:
    method = _methods(args.method, args.window)
    if len(method) != 1:
        raise UsageError("reconstruct takes exactly one method")
    method = method[0]
    if args.emit_records and method.kind not in (FSR, SSR):
        raise UsageError("--emit-records needs fsr or ssr")
    volume, fps = _load(args)
    outdir = Path(args.out_dir) if args.out_dir else _output_dir(args) / f"{Path(args.input).stem}_{method.kind}"
    spkio.ensure_dir(outdir)

    manifest = {
        "input": str(args.input),
        "method": str(method),
        "width": volume.width,
        "height": volume.height,
        "frames": volume.frames,
        "fps": fps,
    }
    if args.emit_records:
        with worker_threads(args.workers):
            runs = pixel_records(volume, method, block=args.block)
        words = [encode_runs(r) for r in runs]
        spkio.write_spkr(outdir / "records.spkr", words, volume.width, volume.height, volume.frames, fps)
        manifest["records"] = "records.spkr"
        manifest["words"] = int(sum(w.size for w in words))
    else:
        rec = reconstruct(volume, method, args.workers)
        names = []
        for n, image in enumerate(rec):
            name = FRAME_NAME.format(n, args.format)
            spkio.write_image(image, outdir / name, args.format)
            names.append(name)
        manifest["images"] = names
    try:
        (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as e:
        raise spkio.SpikeIOError(f"cannot write {outdir / 'manifest.json'}: {e.strerror or e}") from e
    _emit({"command": "reconstruct", "out_dir": outdir, **{k: v for k, v in manifest.items() if k != "images"}})
    return EXIT_OK


# ---------------------------------------------------------------- verify-stability


def _verify_rate(q: float, length: int, depth: int, threshold: float) -> dict:
    stream = constant_stream(q, length, threshold)
    report = stability_order(stream, depth)
    lo, hi = lemma1_interval_bounds(q, threshold)
    lemma2 = check_lemma2(q, threshold, length)
    ok = report.absolute and lemma2.ok
    row = {
        "q": q,
        "ok": ok,
        "verified_order": report.verified_order,
        "exhausted": report.exhausted,
        "interval_bounds": [lo, hi],
        "intervals": list(lemma2.first_level_values),
        "second_level": list(lemma2.second_level_values),
        "second_level_predicted": list(lemma2.predicted_second_level),
    }
    if report.first_violation:
        v = report.first_violation
        row["violation"] = {"path": v.path, "depth": v.depth, "index": v.index}
    return row


def _verify_pixel(volume: SpikeVolume, x: int, y: int, depth: int) -> dict:
    stream = pixel_stream(volume, x, y)
    report = stability_order(stream, depth)
    row = {"x": x, "y": y, "ok": report.absolute, "verified_order": report.verified_order}
    if report.first_violation:
        v = report.first_violation
        row["violation"] = {"path": v.path, "depth": v.depth, "index": v.index}
        row["breakpoint_frame"] = violation_frame(stream, v)
    return row


def cmd_verify_stability(args) -> int:
    if args.depth < 1:
        raise UsageError(f"--depth must be >= 1, got {args.depth}")
    rows = []
    if args.input:
        volume, _ = _load(args)
        pixels = args.pixel or [(x, y) for y in range(volume.height) for x in range(volume.width)]
        for x, y in pixels:
            rows.append(_verify_pixel(volume, x, y, args.depth))
    else:
        if args.q:
            qs = args.q
        else:
            try:
                qs = sweep_rates(args.count, args.q_min, args.q_max).tolist()
            except ValidationError as e:
                raise UsageError(str(e)) from e
        for q in qs:
            if not 0 < q <= args.threshold:
                raise UsageError(f"rate {q} outside (0, {args.threshold}]")
        rows = [_verify_rate(q, args.length, args.depth, args.threshold) for q in qs]

    failures = [r for r in rows if not r["ok"]]
    for r in rows if args.all else failures:
        _emit({"command": "verify-stability", **r})
    _emit(
        {
            "command": "verify-stability",
            "summary": True,
            "checked": len(rows),
            "failures": len(failures),
            "depth": args.depth,
            "pass": not failures,
        }
    )
    return EXIT_OK if not failures else EXIT_FAIL


# ---------------------------------------------------------------- bench


def _parse_workers(text: str | None, default: int | None) -> list[int | None]:
    if not text:
        return [default]
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise UsageError(f"bad worker list {text!r}") from e


def cmd_bench(args) -> int:
    if args.repeats < 3:
        raise UsageError(f"--repeats must be >= 3, got {args.repeats}")
    methods = _methods(args.methods)
    if args.input:
        volume, _ = _load(args)
    else:
        w, h = args.width or spkio.DEFAULT_WIDTH, args.height or spkio.DEFAULT_HEIGHT
        scene = MovingBarScene(w, h, background=gradient_texture(w, h))
        volume = simulate_scene(scene, args.frames, initial_residual="random", seed=args.seed)
    _emit({"command": "bench", "machine": machine_descriptor()})
    table = []
    for workers in _parse_workers(args.sweep_workers, args.workers):
        for method in methods:
            result = bench(volume, method, args.repeats, workers)
            _emit({"command": "bench", **result.as_dict()})
            table.append(result)
    if not args.quiet:
        print(f"{'method':<8} {'workers':>7} {'frames/s':>10}  geometry", file=sys.stderr)
        for r in table:
            print(f"{r.method:<8} {r.workers:>7} {r.fps:>10.1f}  {r.width}x{r.height}x{r.frames}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- compare


def _load_references(ref_dir: Path, volume: SpikeVolume) -> np.ndarray:
    if not ref_dir.is_dir():
        raise spkio.SpikeIOError(f"cannot read {ref_dir}: reference directory not found")
    ref = np.empty((volume.height, volume.width, volume.frames), dtype=np.float64)
    for n in range(volume.frames):
        for ext in ("pgm", "png"):
            path = ref_dir / FRAME_NAME.format(n, ext)
            if path.is_file():
                break
        else:
            raise spkio.SpikeIOError(f"cannot read {ref_dir / FRAME_NAME.format(n, 'pgm')}: missing reference frame")
        img = spkio.read_image(path)
        if img.shape != (volume.height, volume.width):
            raise spkio.FormatError(f"{path}: reference is {img.shape[1]}x{img.shape[0]}, volume is {volume.width}x{volume.height}")
        ref[:, :, n] = img
    return ref


def cmd_compare(args) -> int:
    if args.psnr and not args.reference_dir:
        raise UsageError("--psnr needs --reference-dir")
    methods = _methods(args.methods)
    volume, _ = _load(args)
    ref = _load_references(Path(args.reference_dir), volume) if args.reference_dir else None
    frames = range(min(args.skip, volume.frames), volume.frames)
    te_frames = frames[:: max(1, args.te_stride)]
    if volume.width < 3 or volume.height < 3:
        raise UsageError("compare needs frames of at least 3x3 pixels")
    for method in methods:
        rec = reconstruct(volume, method, args.workers).values
        te = float(np.mean([two_dimensional_entropy(rec[:, :, n]) for n in te_frames])) if len(te_frames) else 0.0
        p = err = None
        if ref is not None and len(frames):
            sel = slice(frames.start, frames.stop)
            err = float(np.mean((np.floor(rec[:, :, sel] + 0.5) - ref[:, :, sel]) ** 2))
            p = math.inf if err == 0 else 10.0 * math.log10(255.0**2 / err)
        report = MetricReport(te, p, err)
        row = report.as_dict()
        row["psnr"] = _finite(row["psnr"])
        row.pop("throughput")
        _emit({"command": "compare", "method": str(method), "frames": len(frames), **row})
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _pixel(text: str) -> tuple[int, int]:
    try:
        x, y = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"pixel must be X,Y, got {text!r}") from None
    return x, y


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--workers", type=int, default=None, help="kernel threads (default: all available)")
    common.add_argument("--output-dir", default=None, help=f"output directory (default ${OUTPUT_ENV} or .)")

    source = argparse.ArgumentParser(add_help=False)
    source.add_argument("--width", type=int, default=None, help="raw input width (default 400)")
    source.add_argument("--height", type=int, default=None, help="raw input height (default 250)")
    source.add_argument("--msb-first", action="store_true", help="raw input packs bits MSB first")

    parser = argparse.ArgumentParser(prog="spikestab", description="Spike camera simulation, stability checks and reconstruction.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a synthetic scene to an SPK1 file")
    p.add_argument("--scene", choices=sorted(SCENES), required=True)
    p.add_argument("--frames", type=int, default=1024)
    p.add_argument("--width", type=int, default=spkio.DEFAULT_WIDTH)
    p.add_argument("--height", type=int, default=spkio.DEFAULT_HEIGHT)
    p.add_argument("--q", type=float, default=0.3, help="rate of the constant scene")
    p.add_argument("--q-bar", type=float, default=0.8, help="rate inside the bar / wedge")
    p.add_argument("--background", type=float, default=0.2, help="background rate of bar / wedge")
    p.add_argument("--texture", action="store_true", help="use a smooth textured background")
    p.add_argument("--bar-width", type=int, default=4)
    p.add_argument("--frames-per-pixel", type=int, default=8)
    p.add_argument("--q-before", type=float, default=0.3)
    p.add_argument("--q-after", type=float, default=0.125)
    p.add_argument("--switch-frame", type=int, default=500)
    p.add_argument("--threshold", type=float, default=1.0)
    p.add_argument("--random-phase", action="store_true", help="random power-on residual per pixel")
    p.add_argument("--flip-probability", type=float, default=0.0)
    p.add_argument("--rate-jitter", type=float, default=0.0)
    p.add_argument("--fps", type=int, default=spkio.DEFAULT_FPS)
    p.add_argument("--out", default=None, help="SPK1 path (default <output-dir>/<scene>.spk)")
    p.add_argument("--reference-dir", default=None, help="ground-truth frames (default <out>_reference)")
    p.add_argument("--no-reference", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", parents=[common, source], help="reconstruct frames or records")
    p.add_argument("input")
    p.add_argument("--method", default="fsr", help="fsr, ssr, tfi or tfp[-WINDOW]")
    p.add_argument("--window", type=int, default=None, help="TFP window (default 32)")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--format", choices=("pgm", "png"), default="pgm")
    p.add_argument("--emit-records", action="store_true", help="write SPKR run records instead of images")
    p.add_argument("--block", type=int, default=32, help="frames per streaming block for records")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("verify-stability", parents=[common, source], help="check stability over a rate sweep or a file")
    p.add_argument("--input", default=None, help="spike file whose pixel streams are checked")
    p.add_argument("--pixel", type=_pixel, action="append", help="X,Y pixel of --input to check (repeatable)")
    p.add_argument("--q", type=float, action="append", help="explicit rate (repeatable)")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--q-min", type=float, default=1e-3)
    p.add_argument("--q-max", type=float, default=1.0)
    p.add_argument("--length", type=int, default=2048)
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--threshold", type=float, default=1.0)
    p.add_argument("--all", action="store_true", help="print every row, not only failures")
    p.set_defaults(func=cmd_verify_stability)

    p = sub.add_parser("bench", parents=[common, source], help="measure reconstruction throughput")
    p.add_argument("input", nargs="?", default=None, help="spike file (default: synthetic 400x250 bar scene)")
    p.add_argument("--methods", default=DEFAULT_METHODS)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--frames", type=int, default=320, help="frames of the synthetic volume")
    p.add_argument("--sweep-workers", default=None, help="comma-separated worker counts")
    p.add_argument("--quiet", action="store_true", help="skip the human-readable table")
    p.set_defaults(func=cmd_bench, workers=1)

    p = sub.add_parser("compare", parents=[common, source], help="TE and PSNR per method")
    p.add_argument("input")
    p.add_argument("--reference-dir", default=None)
    p.add_argument("--psnr", action="store_true", help="require PSNR (needs --reference-dir)")
    p.add_argument("--methods", default=DEFAULT_METHODS)
    p.add_argument("--skip", type=int, default=0, help="warm-up frames left out of the metrics")
    p.add_argument("--te-stride", type=int, default=16, help="compute TE on every Nth frame")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValidationError) as e:
        print(f"spikestab: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (spkio.SpikeIOError, spkio.FormatError, OSError) as e:
        print(f"spikestab: error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
