"""Command line for training and evaluating the upscaler.

``xcbp train`` consumes a dataset manifest produced by the acoustic-map
generator and writes a checkpoint plus a CSV training log (step, loss,
psnr).  ``xcbp evaluate`` scores a checkpoint on the manifest's test split
and writes a report with the benchmark's CSV schema
(scene_id, scale, mode, method, psnr_db, ssim).
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import torch

from .data import load_image, load_pairs
from .metrics import psnr, ssim
from .model import ModelConfig
from .train import TrainConfig, load_checkpoint, save_checkpoint, train_scale, write_log


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xcbp", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one scale on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scale", type=int, default=2, choices=(2, 4, 8))
    p.add_argument("--cycles", type=int, default=4)
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--reduction", type=int, default=16)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--steps-per-epoch", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--patch", type=int, default=48)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base-checkpoint", default=None,
                   help="previous-scale checkpoint to freeze and extend")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--log", required=True)

    p = sub.add_parser("evaluate", help="score a checkpoint on manifest pairs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("test", "train", "all"))
    p.add_argument("--lr-mode", default="rounded")
    p.add_argument("--hr-mode", default="double")
    p.add_argument("--output", required=True)
    return parser


def _cmd_train(args) -> int:
    model_config = ModelConfig(
        cycles=args.cycles, channels=args.channels, reduction=args.reduction
    )
    train_config = TrainConfig(
        scale=args.scale,
        epochs=args.epochs,
        steps_per_epoch=args.steps_per_epoch,
        batch_size=args.batch_size,
        hr_patch=args.patch,
        learning_rate=args.lr,
        seed=args.seed,
    )
    base = None
    if args.base_checkpoint:
        base, _ = load_checkpoint(args.base_checkpoint)
    result = train_scale(args.manifest, model_config, train_config, base_model=base)
    result.model.load_state_dict(result.best_state)
    save_checkpoint(args.checkpoint, result.model, model_config, result.best_psnr)
    write_log(args.log, result.log_rows)
    print(args.checkpoint)
    print(args.log)
    print(f"best psnr: {result.best_psnr:.2f} dB")
    return 0


def _cmd_evaluate(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    pairs = load_pairs(
        args.manifest, model.scale, lr_mode=args.lr_mode, hr_mode=args.hr_mode
    )
    if args.split != "all":
        kept = [p for p in pairs if p.split == args.split]
        pairs = kept or pairs
    lines = ["scene_id,scale,mode,method,psnr_db,ssim"]
    scores = []
    with torch.no_grad():
        for pair in pairs:
            lr = load_image(pair.lr_path)[None]
            hr = load_image(pair.hr_path)[None]
            out = torch.clamp(model(lr), 0.0, 1.0)
            p = psnr(out, hr)
            s = ssim(out, hr)
            scores.append((p, s))
            p_txt = "inf" if math.isinf(p) else repr(p)
            lines.append(
                f"{pair.scene_id},{model.scale},{args.lr_mode},xcbp,{p_txt},{s!r}"
            )
    finite = [p for p, _ in scores if not math.isinf(p)]
    mean_p = sum(finite) / len(finite) if finite else math.inf
    mean_s = sum(s for _, s in scores) / len(scores)
    p_txt = "inf" if math.isinf(mean_p) else repr(mean_p)
    lines.append(f"summary,,,mean,{p_txt},{mean_s!r}")
    Path(args.output).write_text("\n".join(lines) + "\n")
    print(args.output)
    return 0


def run(argv: list[str]) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            return _cmd_train(args)
        return _cmd_evaluate(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
