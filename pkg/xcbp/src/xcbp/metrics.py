"""Quality metrics on [0, 1] tensors, matching the 8-bit benchmark scale."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F


def to_uint8_scale(x: torch.Tensor) -> torch.Tensor:
    """Quantize a [0, 1] tensor to the 8-bit grid the benchmark reports on."""
    return torch.clamp((x * 255.0).round(), 0.0, 255.0)


def psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    """PSNR in dB over 8-bit levels; infinite for identical images."""
    qa, qb = to_uint8_scale(a), to_uint8_scale(b)
    mse = float(torch.mean((qa - qb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def ssim(a: torch.Tensor, b: torch.Tensor) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5) on 8-bit levels."""
    qa, qb = to_uint8_scale(a), to_uint8_scale(b)
    if qa.dim() == 3:
        qa, qb = qa[None], qb[None]
    offsets = torch.arange(11, dtype=torch.float64) - 5.0
    w1 = torch.exp(-(offsets**2) / (2 * 1.5**2))
    w1 = w1 / w1.sum()
    window = (w1[:, None] * w1[None, :])[None, None]
    qa = qa.double()
    qb = qb.double()
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    mu_a = F.conv2d(qa, window)
    mu_b = F.conv2d(qb, window)
    var_a = F.conv2d(qa * qa, window) - mu_a**2
    var_b = F.conv2d(qb * qb, window) - mu_b**2
    cov = F.conv2d(qa * qb, window) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float((num / den).mean())
