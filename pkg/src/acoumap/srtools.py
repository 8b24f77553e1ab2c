"""Baseline upscalers and image-quality metrics for benchmark evaluation.

The bicubic resampler is a separable cubic-convolution filter (kernel
parameter a = -0.5) with center-aligned sampling; on downscale the kernel is
stretched by the inverse scale for antialiasing, and every output tap row is
normalized to unit sum.  Borders replicate the edge sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ParameterError
from .imaging import GrayImage
from .numutil import round_half_away_from_zero

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 255.0


@dataclass(frozen=True)
class MetricResult:
    """A PSNR/SSIM pair for one image comparison."""

    psnr: float  # dB; math.inf for identical images
    ssim: float

    def __post_init__(self):
        if self.ssim > 1.0 + 1e-12:
            raise ParameterError(f"ssim {self.ssim} exceeds 1")
        if self.psnr < 0.0:
            raise ParameterError(f"psnr {self.psnr} is negative")


def cubic_kernel(t, a: float = -0.5):
    """Cubic-convolution kernel values at offsets ``t``."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    out = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    tn = t[near]
    tf = t[far]
    out[near] = (a + 2.0) * tn**3 - (a + 3.0) * tn**2 + 1.0
    out[far] = a * tf**3 - 5.0 * a * tf**2 + 8.0 * a * tf - 4.0 * a
    return out


def _resample_weights(in_len: int, out_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-output-pixel source indices and normalized cubic weights."""
    ratio = out_len / in_len
    # Center-aligned mapping: output pixel centers land at
    # (i + 0.5) / ratio - 0.5 on the input grid.
    src = (np.arange(out_len) + 0.5) / ratio - 0.5
    stretch = min(ratio, 1.0)  # kernel widens when downscaling
    support = 2.0 / stretch
    left = np.floor(src - support).astype(np.int64) + 1
    n_taps = int(math.ceil(2.0 * support)) + 1
    taps = left[:, None] + np.arange(n_taps)[None, :]
    weights = cubic_kernel((src[:, None] - taps) * stretch)
    weights /= weights.sum(axis=1, keepdims=True)
    taps = np.clip(taps, 0, in_len - 1)  # replicate edges
    return taps, weights


def _resample_axis(values: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    moved = np.moveaxis(values, axis, 0)
    taps, weights = _resample_weights(moved.shape[0], out_len)
    out = np.einsum("ot,ot...->o...", weights, moved[taps])
    return np.moveaxis(out, 0, axis)


def bicubic_resize(img: GrayImage, scale) -> GrayImage:
    """Cubic-convolution resize by a rational scale factor.

    ``scale`` must yield integer output dimensions for both axes.
    """
    frac = Fraction(scale).limit_denominator(10**6)
    if frac <= 0:
        raise ParameterError("scale must be > 0")
    out_w = img.width * frac
    out_h = img.height * frac
    if out_w.denominator != 1 or out_h.denominator != 1:
        raise ParameterError(
            f"scale {scale} gives non-integer output size for "
            f"{img.width}x{img.height}"
        )
    out_w, out_h = int(out_w), int(out_h)
    values = img.pixels.astype(np.float64)
    values = _resample_axis(values, out_h, axis=0)
    values = _resample_axis(values, out_w, axis=1)
    pixels = np.clip(round_half_away_from_zero(values), 0, 255).astype(np.uint8)
    return GrayImage(out_w, out_h, pixels)


def gaussian_sigma_for_kernel(kernel_size: int) -> float:
    return 0.3 * ((kernel_size - 1) * 0.5 - 1.0) + 0.8


def gaussian_taps(kernel_size: int, sigma: float | None = None) -> np.ndarray:
    """Unit-sum Gaussian taps on integer offsets.

    Odd sizes sample the Gaussian at integer offsets.  Even sizes sample at
    the symmetric half-integer offsets and fold the result back onto the
    integer grid by averaging the two half-pixel alignments, which keeps the
    operator symmetric (size k becomes k+1 effective taps).
    """
    if kernel_size < 1:
        raise ParameterError("kernel size must be >= 1")
    if sigma is None:
        sigma = gaussian_sigma_for_kernel(kernel_size)
    if sigma <= 0.0:
        raise ParameterError("sigma must be > 0")
    offsets = np.arange(kernel_size) - (kernel_size - 1) / 2.0
    taps = np.exp(-(offsets**2) / (2.0 * sigma**2))
    taps /= taps.sum()
    if kernel_size % 2 == 0:
        taps = np.convolve(taps, [0.5, 0.5])
    return taps


def _blur_axis(values: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    half = (len(taps) - 1) // 2
    padded = np.pad(
        values,
        [(half, half) if ax == axis else (0, 0) for ax in range(values.ndim)],
        mode="reflect",
    )
    windows = sliding_window_view(padded, len(taps), axis=axis)
    return windows @ taps


def gaussian_blur(
    img: GrayImage, kernel_size: int, sigma: float | None = None
) -> GrayImage:
    """Separable Gaussian smoothing with reflective borders."""
    taps = gaussian_taps(kernel_size, sigma)
    values = img.pixels.astype(np.float64)
    values = _blur_axis(values, taps, axis=0)
    values = _blur_axis(values, taps, axis=1)
    pixels = np.clip(round_half_away_from_zero(values), 0, 255).astype(np.uint8)
    return GrayImage(img.width, img.height, pixels)


def _check_same_shape(a: GrayImage, b: GrayImage) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise ParameterError(
            f"image sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def psnr(a: GrayImage, b: GrayImage) -> float:
    """Peak signal-to-noise ratio in dB; identical images give infinity."""
    _check_same_shape(a, b)
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DYNAMIC_RANGE**2 / mse)


def _windowed_mean(values: np.ndarray, w: np.ndarray) -> np.ndarray:
    # Separable valid-mode weighted mean with an outer-product window.
    out = np.einsum("hwk,k->hw", sliding_window_view(values, len(w), axis=0), w)
    out = np.einsum("hwk,k->hw", sliding_window_view(out, len(w), axis=1), w)
    return out


def ssim(a: GrayImage, b: GrayImage) -> float:
    """Mean structural similarity with an 11x11 Gaussian window."""
    _check_same_shape(a, b)
    if a.width < SSIM_WINDOW or a.height < SSIM_WINDOW:
        raise ParameterError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM"
        )
    offsets = np.arange(SSIM_WINDOW) - (SSIM_WINDOW - 1) / 2.0
    w = np.exp(-(offsets**2) / (2.0 * SSIM_SIGMA**2))
    w /= w.sum()
    x = a.pixels.astype(np.float64)
    y = b.pixels.astype(np.float64)
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    mu_x = _windowed_mean(x, w)
    mu_y = _windowed_mean(y, w)
    var_x = _windowed_mean(x * x, w) - mu_x**2
    var_y = _windowed_mean(y * y, w) - mu_y**2
    cov = _windowed_mean(x * y, w) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def compare(a: GrayImage, b: GrayImage) -> MetricResult:
    return MetricResult(psnr=psnr(a, b), ssim=ssim(a, b))


def parse_method(text: str):
    """Parse an upscale method name: ``bicubic`` or ``bicubic+g<k>``."""
    text = text.strip().lower()
    if text == "bicubic":
        return ("bicubic", None)
    if text.startswith("bicubic+g"):
        try:
            k = int(text[len("bicubic+g"):])
        except ValueError as exc:
            raise ParameterError(f"bad Gaussian kernel size in {text!r}") from exc
        if k < 1:
            raise ParameterError("Gaussian kernel size must be >= 1")
        return ("bicubic+gaussian", k)
    raise ParameterError(f"unknown upscale method {text!r}")


def upscale(img: GrayImage, scale, method: str = "bicubic") -> GrayImage:
    kind, kernel = parse_method(method)
    out = bicubic_resize(img, scale)
    if kind == "bicubic+gaussian":
        out = gaussian_blur(out, kernel)
    return out


def write_report(path: str | Path, rows: list[dict]) -> None:
    """Write a per-image metric report plus an aggregate summary row.

    Rows need keys scene_id, scale, mode, method, psnr_db, ssim.  Infinite
    PSNR serializes as ``inf`` and is excluded from the mean.
    """
    lines = ["scene_id,scale,mode,method,psnr_db,ssim"]
    for r in rows:
        p = r["psnr_db"]
        p_txt = "inf" if math.isinf(p) else repr(float(p))
        lines.append(
            f"{r['scene_id']},{r['scale']},{r['mode']},{r['method']},"
            f"{p_txt},{float(r['ssim'])!r}"
        )
    finite = [r["psnr_db"] for r in rows if not math.isinf(r["psnr_db"])]
    mean_psnr = sum(finite) / len(finite) if finite else math.inf
    mean_ssim = sum(r["ssim"] for r in rows) / len(rows) if rows else 0.0
    p_txt = "inf" if math.isinf(mean_psnr) else repr(float(mean_psnr))
    lines.append(f"summary,,,mean,{p_txt},{float(mean_ssim)!r}")
    Path(path).write_text("\n".join(lines) + "\n")
