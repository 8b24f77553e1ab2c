"""Multi-scale paired dataset generation with manifests and test split.

A dataset enumerates scenes over an acquisition grid: every (position,
frequency-1, frequency-2) triple becomes one scene containing two sources
mirrored in azimuth.  Positions follow the acquisition convention where the
stated angle is measured with 90 degrees at broadside, so a source at angle
``a`` sits at azimuth ``a - 90`` and its mirror at ``90 - a``; at 90 degrees
the pair coincides.

Each scene is synthesized once and beamformed independently at every
(resolution, delay-mode) combination - low-resolution images are never
resampled from the high-resolution ones.  Files land under
``<output_dir>/<label>/<mode>/<WxH>/<scene_id>.png`` and the manifest is a
line-delimited JSON file with a versioned header record.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import gaussian_kde

from .beamform import DelayMode, SrpConfig, acoustic_heatmap
from .errors import DegenerateRangeError, ParameterError, SchemaError, WindowingError
from .geometry import SPEED_OF_SOUND, build_steering_grid, load_array
from .imaging import AcousticImage, decode_png, encode_png, normalize_minmax
from .srtools import bicubic_resize, psnr
from .synthesis import (
    FilterChainConfig,
    MicCapture,
    Scene,
    SoundSource,
    cic_decimate,
    fir_decimate,
    sigma_delta_modulate,
    synthesize_scene,
)

MANIFEST_FORMAT = "acoumap-manifest"
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class DatasetConfig:
    """Acquisition grid, rendering targets, and provenance parameters."""

    angle_start: float = 60.0
    angle_end: float = 90.0
    angle_step: float = 2.0
    freq_start: float = 2000.0
    freq_end: float = 10000.0
    freq_step: float = 500.0
    resolutions: tuple[tuple[int, int], ...] = (
        (640, 480), (320, 240), (160, 120), (80, 60),
    )
    delay_modes: tuple[DelayMode, ...] = (DelayMode.rounded(), DelayMode.double())
    chain: FilterChainConfig = field(default_factory=FilterChainConfig)
    output_dir: str = "dataset"
    seed: int = 0
    label: str = "sim"
    fov_deg: float = 60.0
    amplitude: float = 0.45
    distance_m: float = 1.0
    start_time: float = 0.05
    end_time: float = 0.10
    direct_pcm: bool = True
    das_stage: str = "cic"  # which chain stage feeds the beamformer
    block_length: int = 64
    max_blocks: int | None = None
    n_test: int = 0
    speed_of_sound: float = SPEED_OF_SOUND
    array_name: str = "umap"

    def __post_init__(self):
        if self.das_stage not in ("cic", "fir"):
            raise ParameterError("das_stage must be 'cic' or 'fir'")
        if self.angle_step <= 0 or self.freq_step <= 0:
            raise ParameterError("grid steps must be > 0")
        if self.angle_end < self.angle_start or self.freq_end < self.freq_start:
            raise ParameterError("grid ranges must be non-decreasing")
        if not self.resolutions:
            raise ParameterError("need at least one resolution")
        if not self.delay_modes:
            raise ParameterError("need at least one delay mode")
        half_fov = self.fov_deg / 2.0
        for bound in (self.angle_start, self.angle_end):
            if abs(bound - 90.0) > half_fov + 1e-9:
                raise ParameterError(
                    f"angle {bound} deg falls outside the {self.fov_deg} deg "
                    "field of view around broadside"
                )

    @property
    def das_rate(self) -> float:
        """Sampling rate at the delay-and-sum stage."""
        if self.das_stage == "cic":
            return self.chain.cic_output_rate
        return self.chain.output_rate

    @property
    def angles(self) -> np.ndarray:
        return np.arange(
            self.angle_start, self.angle_end + self.angle_step / 2.0, self.angle_step
        )

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(
            self.freq_start, self.freq_end + self.freq_step / 2.0, self.freq_step
        )

    @property
    def scenes_per_set(self) -> int:
        return len(self.angles) * len(self.frequencies) ** 2

    @property
    def n_sets(self) -> int:
        return len(self.resolutions) * len(self.delay_modes)

    @property
    def total_images(self) -> int:
        return self.scenes_per_set * self.n_sets

    def to_dict(self) -> dict:
        d = {
            k: getattr(self, k)
            for k in (
                "angle_start", "angle_end", "angle_step",
                "freq_start", "freq_end", "freq_step",
                "output_dir", "seed", "label", "fov_deg", "amplitude",
                "distance_m", "start_time", "end_time", "direct_pcm",
                "das_stage", "block_length", "max_blocks", "n_test",
                "speed_of_sound", "array_name",
            )
        }
        d["resolutions"] = [list(r) for r in self.resolutions]
        d["delay_modes"] = [_mode_spec(m) for m in self.delay_modes]
        d["chain"] = {
            "fs_in": self.chain.fs_in,
            "cic_order": self.chain.cic_order,
            "cic_decimation": self.chain.cic_decimation,
            "fir_order": self.chain.fir_order,
            "fir_decimation": self.chain.fir_decimation,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        d = dict(d)
        d["resolutions"] = tuple(tuple(r) for r in d["resolutions"])
        d["delay_modes"] = tuple(DelayMode.parse(m) for m in d["delay_modes"])
        d["chain"] = FilterChainConfig(**d["chain"])
        return cls(**d)


def _mode_spec(mode: DelayMode) -> str:
    if mode.kind == "fractional":
        return f"frac:{mode.frac_bits}"
    return mode.kind


@dataclass
class ManifestEntry:
    scene_id: str
    angle_deg: float
    freq1_hz: float
    freq2_hz: float
    width: int
    height: int
    mode: str  # DelayMode spec string, e.g. "rounded" or "frac:8"
    path: str  # relative to output_dir, POSIX separators
    raw_min: float | None = None
    raw_max: float | None = None
    status: str = "pending"

    def to_dict(self) -> dict:
        return {"type": "entry", **self.__dict__}


@dataclass
class DatasetManifest:
    config: DatasetConfig
    entries: list[ManifestEntry]
    split: dict[str, str] = field(default_factory=dict)
    scene_psnr: dict[str, float] = field(default_factory=dict)

    def scene_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.entries:
            seen.setdefault(e.scene_id, None)
        return list(seen)

    def save(self, path: str | Path) -> None:
        # The manifest lives inside the output tree and entry paths are
        # relative, so the stored output_dir is normalized to "." to keep
        # datasets relocatable and renders byte-reproducible.
        config = self.config.to_dict()
        config["output_dir"] = "."
        lines = [json.dumps({
            "type": "header",
            "format": MANIFEST_FORMAT,
            "version": MANIFEST_VERSION,
            "config": config,
        })]
        lines += [json.dumps(e.to_dict()) for e in self.entries]
        if self.scene_psnr:
            lines.append(json.dumps(
                {"type": "scene_psnr", "values": self.scene_psnr}
            ))
        if self.split:
            lines.append(json.dumps({"type": "split", "tags": self.split}))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        lines = [l for l in path.read_text().splitlines() if l.strip()]
        if not lines:
            raise SchemaError(f"{path}: empty manifest")
        head = json.loads(lines[0])
        if head.get("format") != MANIFEST_FORMAT or head.get("version") != MANIFEST_VERSION:
            raise SchemaError(f"{path}: not a {MANIFEST_FORMAT} v{MANIFEST_VERSION} file")
        config_dict = dict(head["config"])
        if config_dict.get("output_dir") == ".":
            config_dict["output_dir"] = str(path.parent)
        manifest = cls(config=DatasetConfig.from_dict(config_dict), entries=[])
        for line in lines[1:]:
            rec = json.loads(line)
            kind = rec.pop("type", None)
            if kind == "entry":
                manifest.entries.append(ManifestEntry(**rec))
            elif kind == "split":
                manifest.split = dict(rec["tags"])
            elif kind == "scene_psnr":
                manifest.scene_psnr = {k: float(v) for k, v in rec["values"].items()}
            else:
                raise SchemaError(f"{path}: unknown record type {kind!r}")
        return manifest


def scene_for(config: DatasetConfig, angle_deg: float, f1: float, f2: float) -> Scene:
    """The two mirrored sources for one acquisition-grid point."""
    return Scene(
        sources=(
            SoundSource(
                azimuth_deg=angle_deg - 90.0, elevation_deg=0.0,
                distance_m=config.distance_m, frequency_hz=f1,
                amplitude=config.amplitude,
            ),
            SoundSource(
                azimuth_deg=90.0 - angle_deg, elevation_deg=0.0,
                distance_m=config.distance_m, frequency_hz=f2,
                amplitude=config.amplitude,
            ),
        ),
        start_time=config.start_time,
        end_time=config.end_time,
    )


def generate_manifest(config: DatasetConfig) -> DatasetManifest:
    """Enumerate every scene x resolution x mode without rendering."""
    angles = config.angles
    freqs = config.frequencies
    if len(angles) == 0 or len(freqs) == 0:
        raise ParameterError("empty acquisition grid")
    entries = []
    index = 0
    for a in angles:
        for f1 in freqs:
            for f2 in freqs:
                scene_id = f"scene{index:05d}_a{a:g}_f{f1:g}_{f2:g}"
                index += 1
                for mode in config.delay_modes:
                    for (w, h) in config.resolutions:
                        rel = Path(config.label) / mode.label / f"{w}x{h}" / f"{scene_id}.png"
                        entries.append(ManifestEntry(
                            scene_id=scene_id,
                            angle_deg=float(a),
                            freq1_hz=float(f1),
                            freq2_hz=float(f2),
                            width=w,
                            height=h,
                            mode=_mode_spec(mode),
                            path=rel.as_posix(),
                        ))
    return DatasetManifest(config=config, entries=entries)


def synthesize_capture(config: DatasetConfig, scene: Scene) -> MicCapture:
    """Scene to DaS-stage PCM, either directly or through the full chain."""
    array = load_array(config.array_name)
    if config.direct_pcm:
        return synthesize_scene(
            scene, array, fs=config.das_rate, c=config.speed_of_sound
        )
    raw = synthesize_scene(
        scene, array, fs=config.chain.fs_in, c=config.speed_of_sound
    )
    pdm = sigma_delta_modulate(raw)
    cic = cic_decimate(pdm, config.chain.cic_order, config.chain.cic_decimation)
    if config.das_stage == "cic":
        return cic
    return fir_decimate(cic, config.chain.fir_order, config.chain.fir_decimation)


def _render_scene(args) -> list[ManifestEntry]:
    config, scene_entries = args
    array = load_array(config.array_name)
    first = scene_entries[0]
    scene = scene_for(config, first.angle_deg, first.freq1_hz, first.freq2_hz)
    out_root = Path(config.output_dir)
    results = []
    try:
        capture = synthesize_capture(config, scene)
    except (ParameterError, WindowingError) as exc:
        for e in scene_entries:
            results.append(replace_status(e, f"failed: {exc}"))
        return results
    cfg = SrpConfig(block_length=config.block_length, max_blocks=config.max_blocks)
    for e in scene_entries:
        try:
            grid = build_steering_grid(e.width, e.height, config.fov_deg, config.fov_deg)
            mode = DelayMode.parse(e.mode)
            srp = acoustic_heatmap(
                capture, array, grid, mode, cfg, c=config.speed_of_sound
            )
            img = AcousticImage.from_values(srp.values)
            gray = normalize_minmax(img)
            target = out_root / e.path
            target.parent.mkdir(parents=True, exist_ok=True)
            encode_png(gray, target)
            e = replace_status(e, "ok")
            e.raw_min = float(srp.values.min())
            e.raw_max = float(srp.values.max())
        except (ParameterError, WindowingError, DegenerateRangeError, OSError) as exc:
            e = replace_status(e, f"failed: {exc}")
        results.append(e)
    return results


def replace_status(entry: ManifestEntry, status: str) -> ManifestEntry:
    out = ManifestEntry(**entry.__dict__)
    out.status = status
    return out


def render_dataset(manifest: DatasetManifest, jobs: int = 1) -> DatasetManifest:
    """Render every manifest entry to a PNG; failures mark entries, not abort.

    Scenes are independent work units; with ``jobs > 1`` they render in a
    process pool.  Outputs are byte-identical regardless of worker count.
    """
    by_scene: dict[str, list[ManifestEntry]] = {}
    for e in manifest.entries:
        by_scene.setdefault(e.scene_id, []).append(e)
    work = [(manifest.config, group) for group in by_scene.values()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rendered = list(pool.map(_render_scene, work))
    else:
        rendered = [_render_scene(w) for w in work]
    new_entries = [e for group in rendered for e in group]
    return DatasetManifest(
        config=manifest.config,
        entries=new_entries,
        split=dict(manifest.split),
        scene_psnr=dict(manifest.scene_psnr),
    )


def _pair_resolutions(config: DatasetConfig) -> tuple[tuple[int, int], tuple[int, int], int]:
    """(hr_res, lr_res, scale) used for the split's upscale-quality score.

    The high-resolution set is the largest resolution; the low-resolution
    one is the smallest whose dimensions divide it evenly (the x8 pair at
    full scale).
    """
    res = sorted(set(config.resolutions), key=lambda r: r[0] * r[1])
    hr = res[-1]
    for lr in res[:-1]:
        if hr[0] % lr[0] == 0 and hr[1] % lr[1] == 0 and hr[0] // lr[0] == hr[1] // lr[1]:
            return hr, lr, hr[0] // lr[0]
    raise ParameterError(
        "no low-resolution set divides the high-resolution set evenly"
    )


def compute_upscale_psnr(
    manifest: DatasetManifest,
    lr_mode: str = "rounded",
    hr_mode: str = "double",
) -> DatasetManifest:
    """Per-scene bicubic upscale PSNR (LR set vs HR ground truth)."""
    hr, lr, scale = _pair_resolutions(manifest.config)
    root = Path(manifest.config.output_dir)
    lookup = {
        (e.scene_id, e.mode, e.width, e.height): e
        for e in manifest.entries
        if e.status == "ok"
    }
    values = {}
    for scene_id in manifest.scene_ids():
        e_lr = lookup.get((scene_id, lr_mode, lr[0], lr[1]))
        e_hr = lookup.get((scene_id, hr_mode, hr[0], hr[1]))
        if e_lr is None or e_hr is None:
            continue
        up = bicubic_resize(decode_png(root / e_lr.path), scale)
        values[scene_id] = psnr(up, decode_png(root / e_hr.path))
    out = DatasetManifest(
        config=manifest.config,
        entries=list(manifest.entries),
        split=dict(manifest.split),
        scene_psnr=values,
    )
    return out


def kde_split_weights(psnrs: np.ndarray) -> np.ndarray:
    """Sampling weights biased toward the low-quality (low PSNR) tail.

    A Gaussian KDE (Silverman bandwidth) estimates the PSNR distribution;
    each scene's weight is one minus the KDE mass below its PSNR, so scenes
    in the low tail are the most likely test picks.  A degenerate
    (constant) sample falls back to uniform weights.
    """
    psnrs = np.asarray(psnrs, dtype=np.float64)
    finite = psnrs[np.isfinite(psnrs)]
    if finite.size == 0 or np.ptp(finite) == 0.0 or finite.size < 2:
        return np.full(psnrs.shape, 1.0 / len(psnrs))
    kde = gaussian_kde(finite, bw_method="silverman")
    lo = float(finite.min()) - 10.0 * float(finite.std())
    mass = np.array([
        kde.integrate_box_1d(lo, p) if np.isfinite(p) else 1.0 for p in psnrs
    ])
    w = np.clip(1.0 - mass, 1e-12, None)
    return w / w.sum()


def split_test_kde(
    manifest: DatasetManifest, n_test: int, seed: int
) -> dict[str, str]:
    """Tag scenes train/test, sampling the test set toward low PSNR."""
    scene_ids = manifest.scene_ids()
    if not manifest.scene_psnr:
        raise ParameterError(
            "manifest has no per-scene upscale PSNR; run compute_upscale_psnr first"
        )
    scored = [s for s in scene_ids if s in manifest.scene_psnr]
    if n_test >= len(scored):
        raise ParameterError(
            f"cannot draw {n_test} test scenes from {len(scored)} scored scenes"
        )
    psnrs = np.array([manifest.scene_psnr[s] for s in scored])
    weights = kde_split_weights(psnrs)
    rng = np.random.default_rng(seed)
    test = set(rng.choice(scored, size=n_test, replace=False, p=weights).tolist())
    tags = {s: ("test" if s in test else "train") for s in scene_ids}
    manifest.split = tags
    return tags
