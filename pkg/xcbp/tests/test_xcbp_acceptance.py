"""Acceptance suite for the upscaler: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_xcbp_acceptance.py -v -s`` to see the lines.
"""

import time

import torch

from xcbp.data import PairDataset, load_pairs
from xcbp.model import CascadedUpscaler, ModelConfig, UpscaleStage
from xcbp.train import TrainConfig, train_model

from conftest import make_dataset


def report(name: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'}: {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_shape_suite():
    toy = ModelConfig(cycles=4, channels=4, reduction=2)
    ok = True
    details = []

    for scale in (2, 4, 8):
        model = CascadedUpscaler(toy, scale)
        out = model(torch.randn(1, 1, 10, 8))
        good = tuple(out.shape) == (1, 1, 10 * scale, 8 * scale)
        ok &= good
        details.append(f"x{scale}->{tuple(out.shape)[-2:]}")

    # alternation: exactly one space changes per cycle, LR first
    stage = UpscaleStage(toy)
    state = stage.encode(torch.randn(1, 1, 8, 8))
    for i in range(toy.cycles):
        prev = state
        state = stage.run_cycle(state)
        lr_changed = not torch.equal(state.f_lr, prev.f_lr)
        sr_changed = not torch.equal(state.f_sr, prev.f_sr)
        expected = (i % 2 == 0, i % 2 == 1)
        ok &= (lr_changed, sr_changed) == expected
    details.append("alternation holds")

    # the decoder reads only the final high-resolution features
    tampered = type(state)(torch.randn_like(state.f_lr), state.f_sr, state.cycle_index)
    ok &= torch.equal(stage.decode(tampered), stage.decode(state))
    details.append("decoder reads F_SR only")

    report("shape-suite", ok, "; ".join(details))


def test_gradient_check():
    torch.manual_seed(0)
    model = CascadedUpscaler(
        ModelConfig(cycles=2, channels=4, reduction=2), 2
    ).double()
    x = torch.rand(1, 1, 8, 8, dtype=torch.float64)
    target = torch.rand(1, 1, 16, 16, dtype=torch.float64)

    def loss_of():
        return torch.nn.functional.l1_loss(model(x), target)

    loss = loss_of()
    loss.backward()
    stage = model.stages[0]
    sampled = [
        stage.encoder.weight,
        stage.extractors[0].encode_lr.weight,
        stage.extractors[0].attention.gate[3].weight,
        stage.upsamplers[0].body[1].weight,
        stage.decoder.weight,
    ]
    eps = 1e-6
    worst = 0.0
    for tensor in sampled:
        idx = tuple(0 for _ in tensor.shape)
        analytic = float(tensor.grad[idx])
        with torch.no_grad():
            original = float(tensor[idx])
            tensor[idx] = original + eps
            up = float(loss_of())
            tensor[idx] = original - eps
            down = float(loss_of())
            tensor[idx] = original
        numeric = (up - down) / (2 * eps)
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)
        worst = max(worst, rel)
    report(
        "gradient-check",
        worst <= 1e-4,
        f"max relative disagreement {worst:.2e} over {len(sampled)} parameters (tol 1e-4)",
    )


def test_overfit_smoke(tmp_path):
    # 4 pairs, tiny config: training PSNR must exceed 40 dB within 2000
    # optimization steps.
    manifest = make_dataset(tmp_path, n_scenes=4, hr_size=48, scales=(2,))
    pairs = load_pairs(manifest, scale=2)
    dataset = PairDataset(pairs, scale=2, hr_patch=48, seed=0)
    eval_pairs = PairDataset(
        pairs, scale=2, hr_patch=48, seed=0, augment_data=False
    ).full_pairs()
    model = CascadedUpscaler(ModelConfig(cycles=2, channels=8, reduction=2), 2)
    config = TrainConfig(
        scale=2, epochs=80, steps_per_epoch=25, batch_size=4, hr_patch=48,
        learning_rate=2e-3, seed=0,
    )
    start = time.time()
    result = train_model(model, dataset, eval_pairs, config, stop_at_psnr=40.0)
    steps = max(r[0] for r in result.log_rows)
    elapsed = time.time() - start
    ok = result.best_psnr > 40.0 and steps <= 2000
    report(
        "overfit-smoke",
        ok,
        f"training PSNR {result.best_psnr:.2f} dB after {steps} steps "
        f"({elapsed:.0f}s, limits: >40 dB within 2000 steps)",
    )
