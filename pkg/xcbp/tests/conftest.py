import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def blob_image(size: int, cx: float, cy: float, spread: float) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.exp(-(((x - cx) ** 2 + (y - cy) ** 2) / (2 * spread**2)))
    img += 0.2 * np.exp(-(((x - cx - 8) ** 2 + (y - cy + 5) ** 2) / 18.0))
    return img / img.max()


def write_png(path: Path, values01: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.clip(np.round(values01 * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(pixels, mode="L").save(path, format="PNG", compress_level=0)


def make_dataset(root: Path, n_scenes: int = 4, hr_size: int = 48,
                 scales=(2,), split_last_as_test: bool = False) -> Path:
    """Write a manifest + PNG tree following the generator's file schema."""
    rng = np.random.default_rng(7)
    records = []
    tags = {}
    for i in range(n_scenes):
        scene_id = f"scene{i:05d}_a80_f3000_4000"
        hr = blob_image(hr_size, rng.uniform(12, hr_size - 12),
                        rng.uniform(12, hr_size - 12), rng.uniform(4, 9))
        sets = {("double", hr_size): hr}
        for s in scales:
            lr_size = hr_size // s
            lr = hr.reshape(lr_size, s, lr_size, s).mean(axis=(1, 3))
            sets[("rounded", lr_size)] = lr
            sets[("double", lr_size)] = lr
        for (mode, size), values in sets.items():
            rel = f"sim/{mode}/{size}x{size}/{scene_id}.png"
            write_png(root / rel, values)
            records.append({
                "type": "entry", "scene_id": scene_id, "angle_deg": 80.0,
                "freq1_hz": 3000.0, "freq2_hz": 4000.0, "width": size,
                "height": size, "mode": mode, "path": rel,
                "raw_min": 0.0, "raw_max": 1.0, "status": "ok",
            })
        tags[scene_id] = (
            "test" if split_last_as_test and i == n_scenes - 1 else "train"
        )
    header = {
        "type": "header", "format": "acoumap-manifest", "version": 1,
        "config": {"label": "sim", "output_dir": "."},
    }
    lines = [json.dumps(header)] + [json.dumps(r) for r in records]
    if split_last_as_test:
        lines.append(json.dumps({"type": "split", "tags": tags}))
    manifest = root / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


@pytest.fixture
def tiny_manifest(tmp_path):
    return make_dataset(tmp_path, n_scenes=4, hr_size=48, scales=(2,))


@pytest.fixture
def multiscale_manifest(tmp_path):
    return make_dataset(
        tmp_path, n_scenes=4, hr_size=64, scales=(2, 4, 8),
        split_last_as_test=True,
    )
