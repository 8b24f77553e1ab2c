"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Criterion 3 (rounded-mode valley) is a known red: with
nearest-integer delay quantization the on-source delays are the best
integer approximations possible, so the steered response of a steady tone
is a monotone staircase around the source and cannot dip there.  The test
asserts the stated behavior faithfully and fails.
"""

import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from acoumap.beamform import (
    DAS_STAGE_RATE,
    DelayMode,
    SrpConfig,
    acoustic_heatmap,
    das_beamform,
    polar_response,
    steered_power,
    waterfall_response,
)
from acoumap.cli import run
from acoumap.dataset import (
    DatasetConfig,
    generate_manifest,
    render_dataset,
    scene_for,
    synthesize_capture,
)
from acoumap.geometry import (
    build_delay_table,
    build_steering_grid,
    build_umap_array,
)
from acoumap.imaging import AcousticImage, decode_png, normalize_minmax
from acoumap.srtools import psnr, ssim, upscale
from acoumap.synthesis import MicCapture, Scene, SoundSource, cic_decimate, synthesize_scene


def report(name: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'}: {name}: {detail}")
    assert ok, f"{name}: {detail}"


def interior_minima(values: np.ndarray) -> int:
    """Strict interior local minima after collapsing equal-value runs."""
    collapsed = [values[0]]
    for v in values[1:]:
        if v != collapsed[-1]:
            collapsed.append(v)
    return sum(
        1
        for i in range(1, len(collapsed) - 1)
        if collapsed[i] < collapsed[i - 1] and collapsed[i] < collapsed[i + 1]
    )


def test_fractional_equals_double():
    # Normalized 160x120 heatmaps for Fractional(8) and Double agree within
    # one gray level at every pixel, over 5 generated scenes.
    array = build_umap_array()
    config = DatasetConfig(resolutions=((160, 120),), max_blocks=12)
    grid = build_steering_grid(160, 120, 60, 60)
    cfg = SrpConfig(block_length=config.block_length, max_blocks=12)
    worst = 0
    cases = [
        (62.0, 3000.0, 5500.0),
        (69.0, 2000.0, 8000.0),
        (76.0, 4500.0, 4500.0),
        (83.0, 9500.0, 2500.0),
        (90.0, 6000.0, 7000.0),
    ]
    for angle, f1, f2 in cases:
        capture = synthesize_capture(config, scene_for(config, angle, f1, f2))
        maps = {}
        for mode in (DelayMode.double(), DelayMode.fractional(8)):
            srp = acoustic_heatmap(capture, array, grid, mode, cfg)
            gray = normalize_minmax(AcousticImage.from_values(srp.values))
            maps[mode.label] = gray.pixels.astype(int)
        worst = max(worst, int(np.abs(maps["double"] - maps["frac8"]).max()))
    report(
        "fractional-equals-double",
        worst <= 1,
        f"max |frac8 - double| = {worst} gray levels over {len(cases)} scenes (tol 1)",
    )


def test_truncation_artifact_ordering():
    # Mean absolute waterfall difference from Double decreases strictly as
    # fractional bits increase, with Rounded worst.
    array = build_umap_array()
    mats = {}
    for mode in (
        DelayMode.double(),
        DelayMode.rounded(),
        DelayMode.fractional(2),
        DelayMode.fractional(4),
        DelayMode.fractional(8),
    ):
        _, _, mats[mode.label] = waterfall_response(
            array, 2000.0, 10000.0, 500.0, 180.0, mode, 1.0
        )
    d = {
        label: float(np.abs(m - mats["double"]).mean())
        for label, m in mats.items()
        if label != "double"
    }
    ok = d["rounded"] > d["frac2"] > d["frac4"] > d["frac8"]
    report(
        "truncation-artifact-ordering",
        ok,
        "d(mode, double): " + ", ".join(f"{k}={v:.2e}" for k, v in d.items()),
    )


def test_rounded_mode_valley():
    # Stated behavior: the rounded-mode polar response at 2 kHz (source at
    # 180 degrees) is non-unimodal within +-15 degrees while the double-
    # precision response is unimodal there.  Known red; see module docstring.
    array = build_umap_array()
    angles, p_rounded = polar_response(
        array, 2000.0, 180.0, DelayMode.rounded(), angular_resolution_deg=1.0
    )
    _, p_double = polar_response(
        array, 2000.0, 180.0, DelayMode.double(), angular_resolution_deg=1.0
    )
    window = (angles >= 165.0) & (angles <= 195.0)
    rounded_minima = interior_minima(p_rounded[window])
    double_minima = interior_minima(p_double[window])
    ok = rounded_minima >= 1 and double_minima == 0
    report(
        "rounded-mode-valley",
        ok,
        f"rounded interior minima = {rounded_minima} (need >= 1), "
        f"double interior minima = {double_minima} (need 0)",
    )


def test_localization():
    # A 4 kHz source placed on a known grid direction localizes within one
    # pixel on an 80x60 double-precision heatmap.
    array = build_umap_array()
    grid = build_steering_grid(80, 60, 60.0, 60.0)
    worst = 0
    for x_t, y_t in [(40, 30), (55, 22), (20, 40)]:
        az = float(grid.azimuth_deg[x_t])
        el = float(grid.elevation_deg[y_t])
        scene = Scene((SoundSource(az, el, 1.0, 4000.0, 0.5),))
        capture = synthesize_scene(scene, array, fs=DAS_STAGE_RATE)
        srp = acoustic_heatmap(capture, array, grid, DelayMode.double())
        y_m, x_m = np.unravel_index(np.argmax(srp.values), srp.values.shape)
        worst = max(worst, abs(int(x_m) - x_t), abs(int(y_m) - y_t))
    report(
        "localization",
        worst <= 1,
        f"max argmax offset = {worst} pixels over 3 directions (tol 1)",
    )


def test_baseline_ordering(tmp_path):
    # 27-scene mini dataset: bicubic+gaussian(k=8) beats plain bicubic by
    # at least 3 dB mean PSNR on the x2 rounded-LR pairs.
    config = DatasetConfig(
        angle_start=66.0, angle_end=90.0, angle_step=12.0,
        freq_start=2500.0, freq_end=9500.0, freq_step=3500.0,
        resolutions=((160, 120), (80, 60)),
        max_blocks=12,
        output_dir=str(tmp_path), label="mini",
    )
    assert config.scenes_per_set == 27
    manifest = render_dataset(generate_manifest(config), jobs=8)
    assert all(e.status == "ok" for e in manifest.entries)
    lookup = {
        (e.scene_id, e.mode, e.width): e for e in manifest.entries
    }
    plain, smoothed = [], []
    for sid in manifest.scene_ids():
        lr = decode_png(tmp_path / lookup[(sid, "rounded", 80)].path)
        hr = decode_png(tmp_path / lookup[(sid, "double", 160)].path)
        plain.append(psnr(upscale(lr, 2, "bicubic"), hr))
        smoothed.append(psnr(upscale(lr, 2, "bicubic+g8"), hr))
    gap = float(np.mean(smoothed) - np.mean(plain))
    report(
        "baseline-ordering",
        gap >= 3.0,
        f"mean bicubic {np.mean(plain):.2f} dB, mean bicubic+g8 "
        f"{np.mean(smoothed):.2f} dB, gap {gap:.2f} dB (need >= 3)",
    )


def test_counting(tmp_path, capsys):
    code = run(["dataset", "--dry-run", "--output-dir", str(tmp_path)])
    out = capsys.readouterr().out
    ok = (
        code == 0
        and "scenes per set: 4624" in out
        and "total images: 36992" in out
    )
    with capsys.disabled():
        report("counting", ok, "dry run reports 4624 scenes/set and 36992 images")


def test_oracle_suites():
    rng = np.random.default_rng(42)

    # SRP block computation vs brute-force square-and-mean, exact.
    samples = rng.normal(size=256)
    got = steered_power(samples, 64, blocks=True)
    srp_exact = True
    for b in range(4):
        acc = 0.0
        block = samples[b * 64:(b + 1) * 64]
        acc = np.mean(block * block)
        srp_exact &= got[b] == acc

    # CIC vs direct box-filter convolution on PDM input, exact.
    bits = rng.choice(np.array([-1, 1], dtype=np.int8), size=(2, 3000))
    out = cic_decimate(MicCapture(3.125e6, bits, "pdm"), 4, 24)
    h = np.array([1], dtype=np.int64)
    for _ in range(4):
        h = np.convolve(h, np.ones(24, dtype=np.int64))
    cic_exact = all(
        np.array_equal(
            out.channels[ch],
            np.convolve(bits[ch].astype(np.int64), h)[:3000][::24] / 24.0**4,
        )
        for ch in range(2)
    )

    # SSIM vs sliding-window brute force within 1e-9.
    a = rng.integers(0, 256, size=(13, 12), dtype=np.uint8)
    b = np.clip(a + rng.integers(-20, 20, size=a.shape), 0, 255).astype(np.uint8)
    from test_srtools import reference_ssim  # same oracle as the unit suite
    from acoumap.imaging import GrayImage
    ssim_err = abs(
        ssim(GrayImage.from_pixels(a), GrayImage.from_pixels(b))
        - reference_ssim(a.astype(np.float64), b.astype(np.float64))
    )

    # DaS linearity within 1e-9 relative, all modes.
    array = build_umap_array()
    grid = build_steering_grid(3, 3, 60.0, 60.0)
    s1 = rng.normal(size=(12, 500))
    s2 = rng.normal(size=(12, 500))
    lin_err = 0.0
    for mode in (DelayMode.rounded(), DelayMode.double(), DelayMode.fractional(8)):
        table = build_delay_table(
            array, grid, fs=DAS_STAGE_RATE, frac_bits=mode.table_frac_bits
        )
        mix = das_beamform(
            MicCapture(DAS_STAGE_RATE, 2.0 * s1 - 0.5 * s2, "raw_pcm"), table, 4, mode
        ).samples
        combo = (
            2.0 * das_beamform(MicCapture(DAS_STAGE_RATE, s1, "raw_pcm"), table, 4, mode).samples
            - 0.5 * das_beamform(MicCapture(DAS_STAGE_RATE, s2, "raw_pcm"), table, 4, mode).samples
        )
        lin_err = max(lin_err, float(np.abs(mix - combo).max() / np.abs(combo).max()))

    ok = srp_exact and cic_exact and ssim_err <= 1e-9 and lin_err <= 1e-9
    report(
        "oracle-suites",
        ok,
        f"srp exact={srp_exact}, cic exact={cic_exact}, "
        f"ssim err={ssim_err:.2e} (tol 1e-9), linearity err={lin_err:.2e} (tol 1e-9)",
    )


def test_determinism(tmp_path):
    # Same config and seed, one worker vs eight: byte-identical files.
    cfg_text = "\n".join([
        "label = desk",
        "angle_start_deg = 82", "angle_end_deg = 90", "angle_step_deg = 8",
        "freq_start_hz = 3000", "freq_end_hz = 6000", "freq_step_hz = 3000",
        "resolutions = 32x24,16x12",
        "delay_modes = rounded,double",
        "max_blocks = 4",
        "seed = 11",
    ])
    cfg = tmp_path / "desk.cfg"
    cfg.write_text(cfg_text + "\n")
    outs = []
    for jobs, sub in [(1, "a"), (8, "b")]:
        out_dir = tmp_path / sub
        code = run([
            "dataset", "--config", str(cfg), "--output-dir", str(out_dir),
            "--jobs", str(jobs), "--seed", "11",
        ])
        assert code == 0
        outs.append(out_dir)
    files_a = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(outs[1]) for p in outs[1].rglob("*") if p.is_file())
    same_names = files_a == files_b
    same_bytes = same_names and all(
        (outs[0] / p).read_bytes() == (outs[1] / p).read_bytes() for p in files_a
    )
    report(
        "determinism",
        same_bytes,
        f"{len(files_a)} files byte-identical across --jobs 1 and --jobs 8",
    )
