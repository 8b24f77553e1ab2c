"""Dataset access through the manifest/PNG interface.

The training corpus is a directory produced by the acoustic-map generator:
grayscale PNGs under ``<label>/<mode>/<WxH>/<scene_id>.png`` plus a
``manifest.jsonl`` whose first record is a header (``format``
``acoumap-manifest``, version 1) carrying the generator config; subsequent
records are per-image entries and optional ``split``/``scene_psnr``
records.  Nothing here imports the generator package; the files are the
contract.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

MANIFEST_FORMAT = "acoumap-manifest"
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class PairSpec:
    scene_id: str
    lr_path: Path
    hr_path: Path
    split: str  # "train" | "test" | "" when the manifest has no split


def _load_records(path: Path) -> tuple[dict, list[dict], dict]:
    lines = [l for l in path.read_text().splitlines() if l.strip()]
    if not lines:
        raise ValueError(f"{path}: empty manifest")
    header = json.loads(lines[0])
    if header.get("format") != MANIFEST_FORMAT or header.get("version") != MANIFEST_VERSION:
        raise ValueError(f"{path}: unsupported manifest format")
    entries = []
    split: dict = {}
    for line in lines[1:]:
        rec = json.loads(line)
        if rec.get("type") == "entry":
            entries.append(rec)
        elif rec.get("type") == "split":
            split = rec.get("tags", {})
    return header, entries, split


def load_pairs(
    manifest_path: str | Path,
    scale: int,
    lr_mode: str = "rounded",
    hr_mode: str = "double",
) -> list[PairSpec]:
    """Enumerate (LR, HR) file pairs for one scale factor.

    The high-resolution set is the largest rendered resolution; the
    low-resolution set is the one smaller by exactly ``scale``.
    """
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    header, entries, split = _load_records(manifest_path)
    ok = [e for e in entries if e.get("status") == "ok"]
    if not ok:
        raise ValueError(f"{manifest_path}: no rendered entries")
    hr_w = max(e["width"] for e in ok)
    hr_h = max(e["height"] for e in ok)
    lr_w, lr_h = hr_w // scale, hr_h // scale
    by_key = {(e["scene_id"], e["mode"], e["width"], e["height"]): e for e in ok}
    pairs = []
    for scene_id in dict.fromkeys(e["scene_id"] for e in ok):
        lr = by_key.get((scene_id, lr_mode, lr_w, lr_h))
        hr = by_key.get((scene_id, hr_mode, hr_w, hr_h))
        if lr is None or hr is None:
            continue
        pairs.append(
            PairSpec(
                scene_id=scene_id,
                lr_path=root / lr["path"],
                hr_path=root / hr["path"],
                split=split.get(scene_id, ""),
            )
        )
    if not pairs:
        raise ValueError(
            f"{manifest_path}: no ({lr_mode} {lr_w}x{lr_h}, {hr_mode} "
            f"{hr_w}x{hr_h}) pairs"
        )
    return pairs


def load_image(path: str | Path) -> torch.Tensor:
    """Grayscale PNG to a (1, H, W) float tensor in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr)[None, :, :]


def augment(lr: torch.Tensor, hr: torch.Tensor, rng: random.Random):
    """Random 90-degree rotation plus horizontal/vertical flips."""
    k = rng.randrange(4)
    if k:
        lr = torch.rot90(lr, k, dims=(-2, -1))
        hr = torch.rot90(hr, k, dims=(-2, -1))
    if rng.random() < 0.5:
        lr = torch.flip(lr, dims=(-1,))
        hr = torch.flip(hr, dims=(-1,))
    if rng.random() < 0.5:
        lr = torch.flip(lr, dims=(-2,))
        hr = torch.flip(hr, dims=(-2,))
    return lr, hr


def random_patch(
    lr: torch.Tensor, hr: torch.Tensor, hr_patch: int, scale: int, rng: random.Random
):
    """Aligned random crop; the HR crop is ``hr_patch`` square."""
    lr_patch = hr_patch // scale
    _, h, w = lr.shape
    if lr_patch > h or lr_patch > w:
        raise ValueError(f"patch {hr_patch} too large for LR {w}x{h} at x{scale}")
    y = rng.randrange(h - lr_patch + 1)
    x = rng.randrange(w - lr_patch + 1)
    lr_c = lr[:, y:y + lr_patch, x:x + lr_patch]
    hr_c = hr[:, y * scale:(y + lr_patch) * scale, x * scale:(x + lr_patch) * scale]
    return lr_c, hr_c


class PairDataset:
    """In-memory pair store with seeded patch/augmentation sampling."""

    def __init__(
        self,
        pairs: list[PairSpec],
        scale: int,
        hr_patch: int,
        seed: int = 0,
        augment_data: bool = True,
    ):
        if not pairs:
            raise ValueError("no training pairs")
        self.scale = scale
        self.hr_patch = hr_patch
        self.augment_data = augment_data
        self.rng = random.Random(seed)
        self.images = [(load_image(p.lr_path), load_image(p.hr_path)) for p in pairs]

    def __len__(self) -> int:
        return len(self.images)

    def sample_batch(self, batch_size: int):
        lrs, hrs = [], []
        for _ in range(batch_size):
            lr, hr = self.images[self.rng.randrange(len(self.images))]
            lr, hr = random_patch(lr, hr, self.hr_patch, self.scale, self.rng)
            if self.augment_data:
                lr, hr = augment(lr, hr, self.rng)
            lrs.append(lr)
            hrs.append(hr)
        return torch.stack(lrs), torch.stack(hrs)

    def full_pairs(self):
        """Whole images, batch dimension added; for evaluation."""
        return [(lr[None], hr[None]) for lr, hr in self.images]
