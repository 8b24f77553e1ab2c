"""Map-to-image conversion: min-max normalization, PNG IO, row profiles."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DegenerateRangeError, ParameterError
from .numutil import round_half_away_from_zero


@dataclass(frozen=True, eq=False)
class AcousticImage:
    """Raw steered-power matrix plus its dimensions."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.height, self.width):
            raise ParameterError(
                f"values shape {v.shape} does not match "
                f"{self.height}x{self.width}"
            )
        if self.width < 1 or self.height < 1:
            raise ParameterError("image dimensions must be positive")
        if not np.all(np.isfinite(v)):
            raise ParameterError("image values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_values(cls, values: np.ndarray) -> "AcousticImage":
        values = np.asarray(values, dtype=np.float64)
        return cls(width=values.shape[1], height=values.shape[0], values=values)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit single-channel image."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.shape != (self.height, self.width):
            raise ParameterError(
                f"pixel shape {p.shape} does not match "
                f"{self.height}x{self.width}"
            )
        if p.dtype != np.uint8:
            if np.any(p < 0) or np.any(p > 255):
                raise ParameterError("pixel values outside [0, 255]")
            p = p.astype(np.uint8)
        object.__setattr__(self, "pixels", p)

    @classmethod
    def from_pixels(cls, pixels: np.ndarray) -> "GrayImage":
        pixels = np.asarray(pixels)
        return cls(width=pixels.shape[1], height=pixels.shape[0], pixels=pixels)


def normalize_minmax(
    img: AcousticImage, constant_as_zero: bool = False
) -> GrayImage:
    """Instance min-max normalization to the 8-bit range.

    Maps the minimum to 0 and the maximum to 255, rounding half away from
    zero.  A constant input has no usable range and raises unless
    ``constant_as_zero`` explicitly asks for an all-zero image.
    """
    v = img.values
    lo = float(v.min())
    hi = float(v.max())
    if hi <= lo:
        if constant_as_zero:
            return GrayImage(img.width, img.height, np.zeros(v.shape, np.uint8))
        raise DegenerateRangeError(
            f"constant image (min == max == {lo!r}) cannot be normalized"
        )
    scaled = (v - lo) * (255.0 / (hi - lo))
    pixels = round_half_away_from_zero(scaled).astype(np.uint8)
    return GrayImage(img.width, img.height, pixels)


def encode_png(img: GrayImage, path: str | Path) -> Path:
    """Write an 8-bit grayscale PNG with zero compression."""
    path = Path(path)
    try:
        Image.fromarray(img.pixels, mode="L").save(
            path, format="PNG", compress_level=0
        )
    except OSError as exc:
        raise OSError(f"failed to write PNG {path}: {exc}") from exc
    return path


def decode_png(path: str | Path) -> GrayImage:
    path = Path(path)
    try:
        with Image.open(path) as im:
            pixels = np.asarray(im.convert("L"), dtype=np.uint8)
    except OSError as exc:
        raise OSError(f"failed to read PNG {path}: {exc}") from exc
    return GrayImage.from_pixels(pixels)


def row_profile(
    img: GrayImage | AcousticImage,
    row_index: int,
    csv_path: str | Path | None = None,
) -> np.ndarray:
    """Values of one image row, optionally written as CSV for plotting."""
    data = img.pixels if isinstance(img, GrayImage) else img.values
    if not 0 <= row_index < img.height:
        raise ParameterError(
            f"row {row_index} out of range for height {img.height}"
        )
    row = data[row_index].copy()
    if csv_path is not None:
        lines = ["column_index,value"]
        lines += [f"{i},{v!r}" for i, v in enumerate(row.tolist())]
        Path(csv_path).write_text("\n".join(lines) + "\n")
    return row
