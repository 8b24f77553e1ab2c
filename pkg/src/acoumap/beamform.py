"""Delay-and-sum beamforming, steered response power, and array responses.

Three delay modes are supported:

* ``rounded`` - integer delays, nearest-index lookup.
* ``double`` - linear interpolation between the floor and ceil samples with
  the double-precision weight, divided by 2.
* ``frac:n`` - the same interpolation with the weight quantized to n bits,
  divided by ``2**(n+1)`` (a bit shift in fixed-point hardware).

The interpolated modes therefore carry half the gain of the rounded mode;
per-image min-max normalization cancels the constant factor, and
consistency checks compare ``2x`` the interpolated output against the
rounded one.

Beamforming is evaluated on the valid window only: output indices keep
``margin`` samples of headroom on both ends so every delayed index stays in
bounds for every microphone and mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ParameterError, WindowingError
from .geometry import (
    SPEED_OF_SOUND,
    DelayTable,
    MicrophoneArray,
    SteeringGrid,
    SteeringVector,
    build_delay_table,
    direction_in_plane,
    rounded_index,
)
from .synthesis import MicCapture, SoundSource, synthesize_tones

# Default rate at the delay-and-sum stage for array-response diagnostics:
# the CIC output rate of the reference chain (3.125 MHz / 24).
DAS_STAGE_RATE = 3_125_000.0 / 24.0

_CHUNK = 256  # directions per gather chunk; fixed so maps are bit-stable


@dataclass(frozen=True)
class DelayMode:
    """Which delay representation the beamformer uses."""

    kind: str  # "rounded" | "double" | "fractional"
    frac_bits: int | None = None

    def __post_init__(self):
        if self.kind not in ("rounded", "double", "fractional"):
            raise ParameterError(f"unknown delay mode {self.kind!r}")
        if self.kind == "fractional":
            n = self.frac_bits
            if n is None or not 1 <= n <= 30:
                raise ParameterError("fractional mode needs 1 <= frac_bits <= 30")
        elif self.frac_bits is not None:
            raise ParameterError(f"{self.kind} mode takes no frac_bits")

    @classmethod
    def rounded(cls) -> "DelayMode":
        return cls("rounded")

    @classmethod
    def double(cls) -> "DelayMode":
        return cls("double")

    @classmethod
    def fractional(cls, frac_bits: int) -> "DelayMode":
        return cls("fractional", frac_bits)

    @classmethod
    def parse(cls, text: str) -> "DelayMode":
        """Parse ``rounded``, ``double``, or ``frac:<n>``."""
        text = text.strip().lower()
        if text == "rounded":
            return cls.rounded()
        if text == "double":
            return cls.double()
        if text.startswith("frac:"):
            try:
                return cls.fractional(int(text[5:]))
            except ValueError as exc:
                raise ParameterError(f"bad fractional bit count in {text!r}") from exc
        raise ParameterError(f"unknown delay mode {text!r}")

    @property
    def label(self) -> str:
        if self.kind == "fractional":
            return f"frac{self.frac_bits}"
        return self.kind

    @property
    def table_frac_bits(self) -> int:
        return self.frac_bits if self.kind == "fractional" else 0


@dataclass(frozen=True, eq=False)
class BeamOutput:
    samples: np.ndarray
    direction: SteeringVector


@dataclass(frozen=True, eq=False)
class SrpMap:
    """Steered response power over a steering grid."""

    width: int
    height: int
    values: np.ndarray  # (height, width), nonnegative
    grid: SteeringGrid
    mode: DelayMode


@dataclass(frozen=True)
class SrpConfig:
    """Steered-power aggregation settings for map generation."""

    block_length: int = 64
    max_blocks: int | None = None

    def __post_init__(self):
        if self.block_length < 1:
            raise ParameterError("block_length must be >= 1")
        if self.max_blocks is not None and self.max_blocks < 1:
            raise ParameterError("max_blocks must be >= 1 when given")


def _mode_weights(table: DelayTable, mode: DelayMode):
    """Floor indices plus (floor, ceil) weights realizing the mode's delays.

    The weight pairing puts ``alpha`` on the ceil-indexed sample so the
    effective delay is ``floor + alpha``; the ceil index is always
    ``floor + 1`` (its weight is zero whenever the delay is integral).
    """
    if mode.kind == "rounded":
        f = rounded_index(table.exact).astype(np.int64)
        w_f = np.ones_like(table.exact)
        w_c = None
    elif mode.kind == "double":
        f = np.floor(table.exact).astype(np.int64)
        alpha = table.exact - f
        w_f = (1.0 - alpha) / 2.0
        w_c = alpha / 2.0
    else:
        if table.frac_bits != mode.frac_bits:
            raise ParameterError(
                f"table was built with frac_bits={table.frac_bits}, "
                f"mode needs {mode.frac_bits}"
            )
        scale = 1 << mode.frac_bits
        denom = float(2 * scale)
        f = table.floor_index
        af = table.alpha_frac.astype(np.float64)
        w_f = (scale - af) / denom
        w_c = af / denom
    return f, w_f, w_c


def _valid_window(capture: MicCapture, table: DelayTable, need: int = 1):
    if capture.stage == "pdm":
        raise ParameterError("beamforming expects PCM samples, not a PDM stream")
    if capture.n_channels != table.n_microphones:
        raise ParameterError(
            f"capture has {capture.n_channels} channels but the delay table "
            f"covers {table.n_microphones} microphones"
        )
    margin = table.margin
    length = capture.n_samples - 2 * margin
    if length < need:
        worst = table.worst_microphone()
        raise WindowingError(
            f"capture of {capture.n_samples} samples leaves no valid window "
            f"after trimming {margin} samples for the delays of microphone "
            f"{worst} (max |delay| {table.max_abs_exact:.2f} samples)"
        )
    return margin, length


def das_beamform(
    capture: MicCapture,
    table: DelayTable,
    dir_index: int,
    mode: DelayMode,
) -> BeamOutput:
    """Beamform one steering direction over the capture's valid window."""
    margin, length = _valid_window(capture, table)
    f, w_f, w_c = _mode_weights(table, mode)
    ch = np.asarray(capture.channels, dtype=np.float64)
    out = np.zeros(length)
    for m in range(table.n_microphones):
        start = margin - int(f[dir_index, m])
        out += w_f[dir_index, m] * ch[m, start:start + length]
        if w_c is not None:
            out += w_c[dir_index, m] * ch[m, start - 1:start - 1 + length]
    return BeamOutput(
        samples=out, direction=SteeringVector(table.directions[dir_index])
    )


def steered_power(samples: np.ndarray, block_length: int, blocks: bool = False):
    """Mean squared beamformer output over ``block_length`` samples.

    With ``blocks=True`` returns one power value per consecutive full block;
    otherwise a single value over the first block.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if block_length < 1:
        raise ParameterError("block_length must be >= 1")
    if samples.shape[-1] < block_length:
        raise ParameterError(
            f"need at least {block_length} samples, got {samples.shape[-1]}"
        )
    if not blocks:
        head = samples[..., :block_length]
        return float(np.mean(head * head))
    n = samples.shape[-1] // block_length
    trimmed = samples[..., : n * block_length]
    squared = trimmed.reshape(*trimmed.shape[:-1], n, block_length) ** 2
    return squared.mean(axis=-1)


def srp_all(
    capture: MicCapture,
    table: DelayTable,
    mode: DelayMode,
    cfg: SrpConfig = SrpConfig(),
) -> np.ndarray:
    """Mean-over-blocks steered power for every table direction.

    Uses equal-size blocks only, so the result equals the plain mean of
    squares over the used sample span; evaluation order is fixed, making
    maps bit-identical regardless of how callers parallelize scenes.
    """
    margin, length = _valid_window(capture, table, need=cfg.block_length)
    n_blocks = length // cfg.block_length
    if cfg.max_blocks is not None:
        n_blocks = min(n_blocks, cfg.max_blocks)
    used = n_blocks * cfg.block_length
    f, w_f, w_c = _mode_weights(table, mode)
    ch = np.asarray(capture.channels, dtype=np.float64)
    windows = sliding_window_view(ch, used, axis=1)
    starts = margin - f  # (N, M), all within the sliding-window range
    n_dirs = table.n_directions
    powers = np.empty(n_dirs)
    for lo in range(0, n_dirs, _CHUNK):
        hi = min(lo + _CHUNK, n_dirs)
        acc = np.zeros((hi - lo, used))
        for m in range(table.n_microphones):
            acc += w_f[lo:hi, m, None] * windows[m][starts[lo:hi, m]]
            if w_c is not None:
                acc += w_c[lo:hi, m, None] * windows[m][starts[lo:hi, m] - 1]
        # Per-block means first, then the mean across blocks: matches the
        # das_beamform + steered_power composition bit for bit.
        squared = acc.reshape(hi - lo, n_blocks, cfg.block_length) ** 2
        powers[lo:hi] = squared.mean(axis=2).mean(axis=1)
    return powers


def acoustic_heatmap(
    capture: MicCapture,
    array: MicrophoneArray,
    grid: SteeringGrid,
    mode: DelayMode,
    cfg: SrpConfig = SrpConfig(),
    c: float = SPEED_OF_SOUND,
) -> SrpMap:
    """One steered-power value per grid pixel."""
    table = build_delay_table(
        array, grid, c=c, fs=capture.sampling_rate,
        frac_bits=mode.table_frac_bits,
    )
    powers = srp_all(capture, table, mode, cfg)
    return SrpMap(
        width=grid.width,
        height=grid.height,
        values=powers.reshape(grid.height, grid.width),
        grid=grid,
        mode=mode,
    )


def _in_plane_directions(angular_resolution_deg: float) -> tuple[np.ndarray, np.ndarray]:
    if angular_resolution_deg <= 0.0:
        raise ParameterError("angular resolution must be > 0")
    angles = np.arange(0.0, 360.0, angular_resolution_deg)
    dirs = np.stack([direction_in_plane(a) for a in angles])
    return angles, dirs


def _single_tone_capture(
    array: MicrophoneArray,
    frequency_hz: float,
    source_angle_deg: float,
    fs: float,
    c: float,
    distance_m: float,
    start_time: float,
    end_time: float,
) -> MicCapture:
    if fs <= 2.0 * frequency_hz:
        raise ParameterError(
            f"DaS-stage rate {fs} Hz undersamples a {frequency_hz} Hz source"
        )
    src = SoundSource(
        azimuth_deg=0.0, elevation_deg=0.0, distance_m=distance_m,
        frequency_hz=frequency_hz, amplitude=1.0,
    )
    pos = distance_m * direction_in_plane(source_angle_deg)
    channels = synthesize_tones(
        array.positions, (src,), pos[None, :], fs, c, start_time, end_time
    )
    return MicCapture(sampling_rate=fs, channels=channels, stage="raw_pcm")


def polar_response(
    array: MicrophoneArray,
    source_freq: float,
    source_angle_deg: float,
    mode: DelayMode,
    angular_resolution_deg: float = 1.0,
    *,
    sampling_rate: float = DAS_STAGE_RATE,
    c: float = SPEED_OF_SOUND,
    distance_m: float = 1.0,
    start_time: float = 0.05,
    end_time: float = 0.10,
    block_length: int = 64,
) -> tuple[np.ndarray, np.ndarray]:
    """Peak-normalized steered power over in-plane angles [0, 360).

    A single test tone is placed in the array plane at ``source_angle_deg``
    and the array is swept through the same plane.  Returns
    ``(angles_deg, powers)`` with ``max(powers) == 1``.
    """
    angles, dirs = _in_plane_directions(angular_resolution_deg)
    capture = _single_tone_capture(
        array, source_freq, source_angle_deg, sampling_rate, c,
        distance_m, start_time, end_time,
    )
    table = build_delay_table(
        array, dirs, c=c, fs=sampling_rate, frac_bits=mode.table_frac_bits
    )
    powers = srp_all(capture, table, mode, SrpConfig(block_length=block_length))
    peak = powers.max()
    if peak > 0.0:
        powers = powers / peak
    return angles, powers


def polar_response_theoretical(
    array: MicrophoneArray,
    source_freq: float,
    source_angle_deg: float,
    angles_deg: np.ndarray,
    c: float = SPEED_OF_SOUND,
) -> np.ndarray:
    """Continuous-time array-factor reference curve (plot aid).

    Ideal unquantized delays applied to an analytic far-field sinusoid; the
    steered power then reduces to the squared magnitude of the phasor sum.
    """
    u_src = direction_in_plane(source_angle_deg)
    k = 2.0 * math.pi * source_freq / c
    dirs = np.stack([direction_in_plane(a) for a in np.asarray(angles_deg, dtype=float)])
    phase = k * ((dirs - u_src[None, :]) @ array.positions.T)
    af = np.abs(np.exp(1j * phase).sum(axis=1)) ** 2
    peak = af.max()
    return af / peak if peak > 0 else af


def waterfall_response(
    array: MicrophoneArray,
    freq_min: float,
    freq_max: float,
    freq_step: float,
    source_angle_deg: float,
    mode: DelayMode,
    angular_resolution_deg: float = 1.0,
    *,
    sampling_rate: float = DAS_STAGE_RATE,
    c: float = SPEED_OF_SOUND,
    distance_m: float = 1.0,
    start_time: float = 0.05,
    end_time: float = 0.10,
    block_length: int = 64,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-frequency polar responses stacked into a (freq, angle) matrix.

    Every row is normalized to peak 1.  Returns
    ``(frequencies_hz, angles_deg, matrix)``.
    """
    if freq_step <= 0.0 or freq_max < freq_min or freq_min <= 0.0:
        raise ParameterError("need 0 < freq_min <= freq_max and freq_step > 0")
    nyquist = sampling_rate / 2.0
    if freq_max >= nyquist:
        raise ParameterError(
            f"frequency range reaches {freq_max} Hz, at or above the "
            f"{nyquist:.1f} Hz DaS-stage Nyquist rate"
        )
    freqs = np.arange(freq_min, freq_max + freq_step / 2.0, freq_step)
    angles, dirs = _in_plane_directions(angular_resolution_deg)
    table = build_delay_table(
        array, dirs, c=c, fs=sampling_rate, frac_bits=mode.table_frac_bits
    )
    rows = []
    for f in freqs:
        capture = _single_tone_capture(
            array, float(f), source_angle_deg, sampling_rate, c,
            distance_m, start_time, end_time,
        )
        powers = srp_all(capture, table, mode, SrpConfig(block_length=block_length))
        peak = powers.max()
        rows.append(powers / peak if peak > 0 else powers)
    return freqs, angles, np.stack(rows)


def write_polar_csv(path: str | Path, angles: np.ndarray, powers: np.ndarray) -> None:
    lines = ["angle_deg,power"]
    lines += [f"{a!r},{p!r}" for a, p in zip(angles.tolist(), powers.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def write_waterfall_csv(
    path: str | Path,
    freqs: np.ndarray,
    angles: np.ndarray,
    matrix: np.ndarray,
) -> None:
    header = "frequency_hz," + ",".join(f"{a!r}" for a in angles.tolist())
    lines = [header]
    for f, row in zip(freqs.tolist(), matrix.tolist()):
        lines.append(f"{f!r}," + ",".join(f"{v!r}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
