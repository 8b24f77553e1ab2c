"""Training loops: single-scale stages and progressive multi-scale growth.

Training follows the benchmark recipe: L1 loss, Adam with zero weight
decay, learning rate stepped down by 0.5 every 500 epochs, batches of
random aligned patches with 90-degree-rotation and flip augmentation.
After every epoch the model is evaluated on held-out pairs and the
checkpoint with the best PSNR is kept.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn.functional as F

from .data import PairDataset, load_pairs
from .metrics import psnr
from .model import CascadedUpscaler, ModelConfig


@dataclass(frozen=True)
class TrainConfig:
    scale: int = 2
    epochs: int = 20
    steps_per_epoch: int = 50
    batch_size: int = 8
    hr_patch: int = 192
    learning_rate: float = 1e-4
    lr_step_epochs: int = 500
    lr_gamma: float = 0.5
    seed: int = 0
    lr_mode: str = "rounded"
    hr_mode: str = "double"


@dataclass
class TrainResult:
    model: CascadedUpscaler
    best_psnr: float
    best_state: dict
    log_rows: list = field(default_factory=list)


def save_checkpoint(path: str | Path, model: CascadedUpscaler, config: ModelConfig,
                    best_psnr: float) -> None:
    torch.save(
        {
            "state_dict": model.state_dict(),
            "scale": model.scale,
            "config": config.__dict__,
            "best_psnr": best_psnr,
        },
        path,
    )


def load_checkpoint(path: str | Path) -> tuple[CascadedUpscaler, float]:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    model = CascadedUpscaler(ModelConfig(**blob["config"]), blob["scale"])
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, float(blob["best_psnr"])


def evaluate_model(model: CascadedUpscaler, pairs) -> float:
    """Mean PSNR over full-image pairs; infinities clamped for averaging."""
    model.eval()
    scores = []
    with torch.no_grad():
        for lr, hr in pairs:
            out = torch.clamp(model(lr), 0.0, 1.0)
            p = psnr(out, hr)
            scores.append(min(p, 100.0) if math.isinf(p) else p)
    model.train()
    return sum(scores) / len(scores)


def write_log(path: str | Path, rows: list) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "loss", "psnr"])
        writer.writerows(rows)


def train_model(
    model: CascadedUpscaler,
    dataset: PairDataset,
    eval_pairs,
    config: TrainConfig,
    stop_at_psnr: float | None = None,
) -> TrainResult:
    """Optimize the model's trainable stages on random patches."""
    trainable = [p for p in model.parameters() if p.requires_grad]
    if not trainable:
        raise ValueError("model has no trainable parameters")
    optimizer = torch.optim.Adam(trainable, lr=config.learning_rate, weight_decay=0.0)
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimizer, step_size=config.lr_step_epochs, gamma=config.lr_gamma
    )
    torch.manual_seed(config.seed)
    model.train()
    best_psnr = -math.inf
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    rows = []
    step = 0
    for _ in range(config.epochs):
        for _ in range(config.steps_per_epoch):
            lr_batch, hr_batch = dataset.sample_batch(config.batch_size)
            optimizer.zero_grad()
            out = model(lr_batch)
            loss = F.l1_loss(out, hr_batch)
            loss.backward()
            optimizer.step()
            step += 1
            rows.append([step, loss.item(), ""])
        scheduler.step()
        score = evaluate_model(model, eval_pairs)
        rows.append([step, "", score])
        if score > best_psnr:
            best_psnr = score
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        if stop_at_psnr is not None and best_psnr > stop_at_psnr:
            break
    return TrainResult(model=model, best_psnr=best_psnr, best_state=best_state, log_rows=rows)


def train_scale(
    manifest_path: str | Path,
    model_config: ModelConfig,
    train_config: TrainConfig,
    base_model: CascadedUpscaler | None = None,
) -> TrainResult:
    """Train one scale from manifest pairs (train split when tagged)."""
    pairs = load_pairs(
        manifest_path, train_config.scale,
        lr_mode=train_config.lr_mode, hr_mode=train_config.hr_mode,
    )
    train_pairs = [p for p in pairs if p.split != "test"]
    eval_specs = [p for p in pairs if p.split == "test"] or train_pairs
    dataset = PairDataset(
        train_pairs, train_config.scale, train_config.hr_patch, seed=train_config.seed
    )
    eval_ds = PairDataset(
        eval_specs, train_config.scale, train_config.hr_patch,
        seed=train_config.seed, augment_data=False,
    )
    if base_model is None:
        model = CascadedUpscaler(model_config, train_config.scale)
    else:
        model = base_model.extend()
        if model.scale != train_config.scale:
            raise ValueError(
                f"extended model is x{model.scale}, config wants x{train_config.scale}"
            )
    return train_model(model, dataset, eval_ds.full_pairs(), train_config)


def progressive_train(
    manifest_path: str | Path,
    model_config: ModelConfig,
    train_config: TrainConfig,
    scales=(2, 4, 8),
) -> dict[int, TrainResult]:
    """Grow the model scale by scale, freezing earlier stages each time."""
    scales = tuple(scales)
    if scales != tuple(sorted(scales)) or scales[0] != 2:
        raise ValueError("scales must start at 2 and increase")
    results: dict[int, TrainResult] = {}
    model = None
    for scale in scales:
        if model is not None and scale != model.scale * 2:
            raise ValueError(f"cannot jump from x{model.scale} to x{scale}")
        from dataclasses import replace

        cfg = replace(train_config, scale=scale)
        result = train_scale(manifest_path, model_config, cfg, base_model=model)
        result.model.load_state_dict(result.best_state)
        results[scale] = result
        model = result.model
    return results
