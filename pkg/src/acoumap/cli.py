"""Command-line surface for batch use.

One binary with subcommands::

    acoumap simulate   scene file -> capture (.npz)
    acoumap beamform   capture -> acoustic heatmap PNG
    acoumap polar      single-frequency polar response CSV
    acoumap waterfall  frequency x azimuth response CSV
    acoumap dataset    full acquisition pipeline (scenes -> PNGs + manifest)
    acoumap upscale    bicubic / bicubic+gaussian upscaling of a PNG
    acoumap evaluate   PSNR/SSIM report over manifest pairs
    acoumap profile    row profile CSV from a PNG

Dataset runs are driven by a flat ``key = value`` config file (``#``
comments allowed); every key can also be overridden on the command line.
Unknown keys are rejected.  Recognized keys and their defaults:

    label = sim                 angle_start_deg = 60
    output_dir = dataset        angle_end_deg = 90
    seed = 0                    angle_step_deg = 2
    array = umap                freq_start_hz = 2000
    fov_deg = 60                freq_end_hz = 10000
    amplitude = 0.45            freq_step_hz = 500
    distance_m = 1.0            resolutions = 640x480,320x240,160x120,80x60
    start_time_s = 0.05         delay_modes = rounded,double
    end_time_s = 0.10           direct_pcm = true
    block_length = 64           das_stage = cic
    max_blocks = 0              fs_in_hz = 3125000
    n_test = 0                  cic_order = 4
    jobs = 1                    cic_decimation = 24
    speed_of_sound = 343        fir_order = 23
    array = umap                fir_decimation = 4

``ACOUMAP_OUTPUT_ROOT`` supplies the default output root when neither the
config nor the command line names one.

Exit status: 0 on success, 2 on usage errors, 1 on runtime failures (with a
categorized ``error: <kind>: <message>`` line on stderr).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import beamform, dataset, imaging, srtools
from .errors import (
    DegenerateRangeError,
    ParameterError,
    SchemaError,
    WindowingError,
)
from .geometry import SPEED_OF_SOUND, build_steering_grid, load_array
from .synthesis import (
    FilterChainConfig,
    MicCapture,
    demodulation_chain,
    load_scene,
    sigma_delta_modulate,
    synthesize_scene,
)

_CONFIG_KEYS = {
    "label": str,
    "output_dir": str,
    "seed": int,
    "array": str,
    "fov_deg": float,
    "amplitude": float,
    "distance_m": float,
    "start_time_s": float,
    "end_time_s": float,
    "block_length": int,
    "max_blocks": int,
    "n_test": int,
    "jobs": int,
    "speed_of_sound": float,
    "angle_start_deg": float,
    "angle_end_deg": float,
    "angle_step_deg": float,
    "freq_start_hz": float,
    "freq_end_hz": float,
    "freq_step_hz": float,
    "resolutions": str,
    "delay_modes": str,
    "direct_pcm": bool,
    "das_stage": str,
    "fs_in_hz": float,
    "cic_order": int,
    "cic_decimation": int,
    "fir_order": int,
    "fir_decimation": int,
}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise SchemaError(f"expected a boolean, got {text!r}")


def parse_config_file(path: str | Path) -> dict:
    """Parse the flat key=value config schema; unknown keys are errors."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise SchemaError(f"{path}:{lineno}: unknown key {key!r}")
        kind = _CONFIG_KEYS[key]
        try:
            if kind is bool:
                values[key] = _parse_bool(value)
            else:
                values[key] = kind(value)
        except ValueError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    return values


def _parse_resolution(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise ParameterError(f"bad resolution {text!r}, expected WxH") from exc


def _dataset_config(values: dict) -> dataset.DatasetConfig:
    resolutions = tuple(
        _parse_resolution(r) for r in values.get(
            "resolutions", "640x480,320x240,160x120,80x60"
        ).split(",")
    )
    modes = tuple(
        beamform.DelayMode.parse(m)
        for m in values.get("delay_modes", "rounded,double").split(",")
    )
    chain = FilterChainConfig(
        fs_in=values.get("fs_in_hz", 3_125_000.0),
        cic_order=values.get("cic_order", 4),
        cic_decimation=values.get("cic_decimation", 24),
        fir_order=values.get("fir_order", 23),
        fir_decimation=values.get("fir_decimation", 4),
    )
    output_dir = values.get("output_dir")
    if output_dir is None:
        root = os.environ.get("ACOUMAP_OUTPUT_ROOT", ".")
        output_dir = str(Path(root) / "dataset")
    max_blocks = values.get("max_blocks", 0) or None
    return dataset.DatasetConfig(
        angle_start=values.get("angle_start_deg", 60.0),
        angle_end=values.get("angle_end_deg", 90.0),
        angle_step=values.get("angle_step_deg", 2.0),
        freq_start=values.get("freq_start_hz", 2000.0),
        freq_end=values.get("freq_end_hz", 10000.0),
        freq_step=values.get("freq_step_hz", 500.0),
        resolutions=resolutions,
        delay_modes=modes,
        chain=chain,
        output_dir=output_dir,
        seed=values.get("seed", 0),
        label=values.get("label", "sim"),
        fov_deg=values.get("fov_deg", 60.0),
        amplitude=values.get("amplitude", 0.45),
        distance_m=values.get("distance_m", 1.0),
        start_time=values.get("start_time_s", 0.05),
        end_time=values.get("end_time_s", 0.10),
        direct_pcm=values.get("direct_pcm", True),
        das_stage=values.get("das_stage", "cic"),
        block_length=values.get("block_length", 64),
        max_blocks=max_blocks,
        n_test=values.get("n_test", 0),
        speed_of_sound=values.get("speed_of_sound", SPEED_OF_SOUND),
        array_name=values.get("array", "umap"),
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--output-dir", default=None)
    parser.add_argument("--jobs", type=int, default=None)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acoumap", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="scene file -> capture (.npz)")
    p.add_argument("--scene", required=True)
    p.add_argument("--array", default="umap")
    p.add_argument("--rate", type=float, default=beamform.DAS_STAGE_RATE,
                   help="PCM sampling rate for the direct path")
    p.add_argument("--full-chain", action="store_true",
                   help="synthesize PDM and run the CIC+FIR chain")
    p.add_argument("--speed-of-sound", type=float, default=SPEED_OF_SOUND)
    p.add_argument("--output", required=True)

    p = sub.add_parser("beamform", help="capture -> heatmap PNG")
    p.add_argument("--capture", required=True)
    p.add_argument("--array", default="umap")
    p.add_argument("--resolution", default="160x120")
    p.add_argument("--mode", default="double")
    p.add_argument("--fov", type=float, default=60.0)
    p.add_argument("--srp-length", type=int, default=64)
    p.add_argument("--speed-of-sound", type=float, default=SPEED_OF_SOUND)
    p.add_argument("--output", required=True)

    p = sub.add_parser("polar", help="polar response CSV")
    p.add_argument("--array", default="umap")
    p.add_argument("--freq", type=float, default=2000.0)
    p.add_argument("--angle", type=float, default=180.0)
    p.add_argument("--mode", default="double")
    p.add_argument("--resolution-deg", type=float, default=1.0)
    p.add_argument("--rate", type=float, default=beamform.DAS_STAGE_RATE)
    p.add_argument("--output", required=True)

    p = sub.add_parser("waterfall", help="frequency x azimuth response CSV")
    p.add_argument("--array", default="umap")
    p.add_argument("--freq-min", type=float, default=2000.0)
    p.add_argument("--freq-max", type=float, default=10000.0)
    p.add_argument("--freq-step", type=float, default=500.0)
    p.add_argument("--angle", type=float, default=180.0)
    p.add_argument("--mode", default="double")
    p.add_argument("--resolution-deg", type=float, default=1.0)
    p.add_argument("--rate", type=float, default=beamform.DAS_STAGE_RATE)
    p.add_argument("--output", required=True)

    p = sub.add_parser("dataset", help="render the acquisition grid")
    p.add_argument("--config", default=None)
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--label", default=None)
    p.add_argument("--resolutions", default=None)
    p.add_argument("--delay-modes", default=None)
    _add_common(p)

    p = sub.add_parser("upscale", help="upscale a PNG")
    p.add_argument("--input", required=True)
    p.add_argument("--scale", type=float, required=True)
    p.add_argument("--method", default="bicubic")
    p.add_argument("--output", required=True)

    p = sub.add_parser("evaluate", help="PSNR/SSIM report over manifest pairs")
    p.add_argument("--pairs", required=True, help="manifest path")
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--method", default="bicubic")
    p.add_argument("--lr-mode", default="rounded")
    p.add_argument("--hr-mode", default="double")
    p.add_argument("--output", required=True)

    p = sub.add_parser("profile", help="row profile CSV from a PNG")
    p.add_argument("--input", required=True)
    p.add_argument("--row", type=int, required=True)
    p.add_argument("--output", required=True)
    return parser


def _cmd_simulate(args) -> int:
    scene = load_scene(args.scene)
    array = load_array(args.array)
    if args.full_chain:
        chain = FilterChainConfig()
        raw = synthesize_scene(scene, array, fs=chain.fs_in, c=args.speed_of_sound)
        capture = demodulation_chain(sigma_delta_modulate(raw), chain)
    else:
        capture = synthesize_scene(scene, array, fs=args.rate, c=args.speed_of_sound)
    capture.save(args.output)
    print(args.output)
    return 0


def _cmd_beamform(args) -> int:
    capture = MicCapture.load(args.capture)
    array = load_array(args.array)
    w, h = _parse_resolution(args.resolution)
    grid = build_steering_grid(w, h, args.fov, args.fov)
    mode = beamform.DelayMode.parse(args.mode)
    srp = beamform.acoustic_heatmap(
        capture, array, grid, mode,
        beamform.SrpConfig(block_length=args.srp_length),
        c=args.speed_of_sound,
    )
    gray = imaging.normalize_minmax(imaging.AcousticImage.from_values(srp.values))
    imaging.encode_png(gray, args.output)
    print(args.output)
    return 0


def _cmd_polar(args) -> int:
    array = load_array(args.array)
    mode = beamform.DelayMode.parse(args.mode)
    angles, powers = beamform.polar_response(
        array, args.freq, args.angle, mode, args.resolution_deg,
        sampling_rate=args.rate,
    )
    beamform.write_polar_csv(args.output, angles, powers)
    print(args.output)
    return 0


def _cmd_waterfall(args) -> int:
    array = load_array(args.array)
    mode = beamform.DelayMode.parse(args.mode)
    freqs, angles, matrix = beamform.waterfall_response(
        array, args.freq_min, args.freq_max, args.freq_step,
        args.angle, mode, args.resolution_deg, sampling_rate=args.rate,
    )
    beamform.write_waterfall_csv(args.output, freqs, angles, matrix)
    print(args.output)
    return 0


def _cmd_dataset(args) -> int:
    values = parse_config_file(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = args.seed
    if args.output_dir is not None:
        values["output_dir"] = args.output_dir
    if args.label is not None:
        values["label"] = args.label
    if args.resolutions is not None:
        values["resolutions"] = args.resolutions
    if args.delay_modes is not None:
        values["delay_modes"] = args.delay_modes
    jobs = args.jobs if args.jobs is not None else values.get("jobs", 1)
    config = _dataset_config(values)
    manifest = dataset.generate_manifest(config)
    if args.dry_run:
        print(f"scenes per set: {config.scenes_per_set}")
        print(f"sets (resolutions x modes): {config.n_sets}")
        print(f"total images: {config.total_images}")
        return 0
    manifest = dataset.render_dataset(manifest, jobs=jobs)
    failed = [e for e in manifest.entries if e.status != "ok"]
    if config.n_test > 0:
        manifest = dataset.compute_upscale_psnr(manifest)
        dataset.split_test_kde(manifest, config.n_test, config.seed)
    manifest_path = Path(config.output_dir) / "manifest.jsonl"
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest.save(manifest_path)
    print(manifest_path)
    if failed:
        print(f"{len(failed)} entries failed", file=sys.stderr)
    return 0


def _cmd_upscale(args) -> int:
    img = imaging.decode_png(args.input)
    out = srtools.upscale(img, args.scale, args.method)
    imaging.encode_png(out, args.output)
    print(args.output)
    return 0


def _cmd_evaluate(args) -> int:
    manifest = dataset.DatasetManifest.load(args.pairs)
    root = Path(manifest.config.output_dir)
    hr_res = max(set(manifest.config.resolutions), key=lambda r: r[0] * r[1])
    lr_res = (hr_res[0] // args.scale, hr_res[1] // args.scale)
    lookup = {
        (e.scene_id, e.mode, e.width, e.height): e
        for e in manifest.entries
        if e.status == "ok"
    }
    rows = []
    for scene_id in manifest.scene_ids():
        e_lr = lookup.get((scene_id, args.lr_mode, lr_res[0], lr_res[1]))
        e_hr = lookup.get((scene_id, args.hr_mode, hr_res[0], hr_res[1]))
        if e_lr is None or e_hr is None:
            continue
        up = srtools.upscale(imaging.decode_png(root / e_lr.path), args.scale, args.method)
        result = srtools.compare(up, imaging.decode_png(root / e_hr.path))
        rows.append({
            "scene_id": scene_id,
            "scale": args.scale,
            "mode": args.lr_mode,
            "method": args.method,
            "psnr_db": result.psnr,
            "ssim": result.ssim,
        })
    if not rows:
        raise ParameterError(
            f"no (LR {lr_res[0]}x{lr_res[1]} {args.lr_mode}, "
            f"HR {hr_res[0]}x{hr_res[1]} {args.hr_mode}) pairs in the manifest"
        )
    srtools.write_report(args.output, rows)
    print(args.output)
    return 0


def _cmd_profile(args) -> int:
    img = imaging.decode_png(args.input)
    imaging.row_profile(img, args.row, csv_path=args.output)
    print(args.output)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "beamform": _cmd_beamform,
    "polar": _cmd_polar,
    "waterfall": _cmd_waterfall,
    "dataset": _cmd_dataset,
    "upscale": _cmd_upscale,
    "evaluate": _cmd_evaluate,
    "profile": _cmd_profile,
}


def run(argv: list[str]) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SchemaError as exc:
        print(f"error: schema: {exc}", file=sys.stderr)
    except ParameterError as exc:
        print(f"error: parameter: {exc}", file=sys.stderr)
    except WindowingError as exc:
        print(f"error: windowing: {exc}", file=sys.stderr)
    except DegenerateRangeError as exc:
        print(f"error: degenerate-range: {exc}", file=sys.stderr)
    except FileNotFoundError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
    return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
