"""Scene synthesis, sigma-delta PDM modulation, and the decimation chain.

A scene is a set of sinusoidal point sources observed by a microphone array
over a time window.  Channels are synthesized with exact spherical
time-of-flight and no attenuation; superposition is by construction, so
synthesis is linear in the source set.

Scene files are structured text with a versioned header::

    acoumap-scene v1
    start_time_s 0.05
    end_time_s 0.1
    source <azimuth_deg> <elevation_deg> <distance_m> <frequency_hz> <amplitude> <phase_rad>

One ``source`` record per source; ``#`` starts a comment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.signal import firwin

from .errors import ParameterError, SchemaError
from .geometry import SPEED_OF_SOUND, MicrophoneArray, direction_from_azel

STAGES = ("raw_pcm", "pdm", "post_cic", "post_fir")


@dataclass(frozen=True)
class SoundSource:
    """A sinusoidal point source.

    Azimuth/elevation follow the steering-grid convention (0, 0 is
    broadside); distance is from the array origin.
    """

    azimuth_deg: float
    elevation_deg: float
    distance_m: float
    frequency_hz: float
    amplitude: float
    phase_rad: float = 0.0

    def __post_init__(self):
        if self.frequency_hz <= 0.0:
            raise ParameterError("source frequency must be > 0")
        if self.distance_m <= 0.0:
            raise ParameterError("source distance must be > 0")
        if self.amplitude <= 0.0:
            raise ParameterError("source amplitude must be > 0")

    def position(self) -> np.ndarray:
        return self.distance_m * direction_from_azel(
            self.azimuth_deg, self.elevation_deg
        )


@dataclass(frozen=True)
class Scene:
    sources: tuple[SoundSource, ...]
    start_time: float = 0.05
    end_time: float = 0.10

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if not (self.end_time > self.start_time >= 0.0):
            raise ParameterError("need end_time > start_time >= 0")


@dataclass(frozen=True, eq=False)
class MicCapture:
    """Per-microphone sample streams at a common rate.

    ``channels`` is an (M, L) array; ``stage`` names the processing stage
    the samples are at.
    """

    sampling_rate: float
    channels: np.ndarray
    stage: str

    def __post_init__(self):
        ch = np.asarray(self.channels)
        if ch.ndim != 2:
            raise ParameterError("channels must be a 2-D (mics, samples) array")
        object.__setattr__(self, "channels", ch)
        if self.stage not in STAGES:
            raise ParameterError(f"unknown capture stage {self.stage!r}")
        if self.stage == "pdm" and ch.size and not np.all(np.abs(ch) == 1):
            raise ParameterError("pdm capture must contain only +/-1 values")

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    def save(self, path: str | Path) -> None:
        np.savez(
            path,
            sampling_rate=self.sampling_rate,
            channels=self.channels,
            stage=self.stage,
        )

    @classmethod
    def load(cls, path: str | Path) -> "MicCapture":
        data = np.load(path)
        return cls(
            sampling_rate=float(data["sampling_rate"]),
            channels=data["channels"],
            stage=str(data["stage"]),
        )


@dataclass(frozen=True)
class FilterChainConfig:
    """PDM demodulation chain parameters (CIC then FIR, both decimating)."""

    fs_in: float = 3_125_000.0
    cic_order: int = 4
    cic_decimation: int = 24
    fir_order: int = 23
    fir_decimation: int = 4

    def __post_init__(self):
        if self.fs_in <= 0.0:
            raise ParameterError("fs_in must be > 0")
        for field in ("cic_order", "cic_decimation", "fir_order", "fir_decimation"):
            if getattr(self, field) < 1:
                raise ParameterError(f"{field} must be >= 1")

    @property
    def cic_output_rate(self) -> float:
        return self.fs_in / self.cic_decimation

    @property
    def output_rate(self) -> float:
        return self.cic_output_rate / self.fir_decimation

    @property
    def total_decimation(self) -> int:
        return self.cic_decimation * self.fir_decimation


def synthesize_tones(
    positions: np.ndarray,
    sources: tuple[SoundSource, ...],
    source_positions: np.ndarray,
    fs: float,
    c: float,
    start_time: float,
    end_time: float,
) -> np.ndarray:
    """Core propagation kernel; returns an (M, L) channel matrix."""
    n = int(round((end_time - start_time) * fs))
    t = start_time + np.arange(n) / fs
    channels = np.zeros((len(positions), n))
    for src, pos in zip(sources, source_positions):
        dists = np.linalg.norm(positions - pos[None, :], axis=1)
        tof = dists / c
        w = 2.0 * math.pi * src.frequency_hz
        for m, tau in enumerate(tof):
            channels[m] += src.amplitude * np.sin(w * (t - tau) + src.phase_rad)
    return channels


def synthesize_scene(
    scene: Scene,
    array: MicrophoneArray,
    fs: float,
    c: float = SPEED_OF_SOUND,
) -> MicCapture:
    """Render a scene to raw PCM channels at rate ``fs``.

    Each channel is the superposition of every source's sinusoid delayed by
    the exact time of flight from the source position to that microphone.
    """
    if not scene.sources:
        raise ParameterError("scene has no sources")
    fmax = max(s.frequency_hz for s in scene.sources)
    if fs <= 2.0 * fmax:
        raise ParameterError(
            f"sampling rate {fs} Hz undersamples a {fmax} Hz source"
        )
    src_pos = np.array([s.position() for s in scene.sources])
    channels = synthesize_tones(
        array.positions, scene.sources, src_pos, fs, c,
        scene.start_time, scene.end_time,
    )
    return MicCapture(sampling_rate=fs, channels=channels, stage="raw_pcm")


def sigma_delta_modulate(capture: MicCapture) -> MicCapture:
    """First-order sigma-delta modulation to a one-bit (+/-1) stream.

    Per sample the output is the sign of the input plus the accumulated
    quantization error; the error state integrates input minus output.
    Channels are processed independently.
    """
    if capture.stage != "raw_pcm":
        raise ParameterError("sigma-delta modulation expects a raw_pcm capture")
    peak = float(np.max(np.abs(capture.channels))) if capture.channels.size else 0.0
    if peak > 1.0:
        raise ParameterError(
            f"input amplitude {peak:.4f} exceeds the modulator range [-1, 1]"
        )
    out = np.empty(capture.channels.shape, dtype=np.int8)
    for m in range(capture.n_channels):
        row = capture.channels[m].tolist()
        bits = out[m]
        acc = 0.0
        for i, x in enumerate(row):
            acc += x
            y = 1 if acc >= 0.0 else -1
            acc -= y
            bits[i] = y
    return MicCapture(
        sampling_rate=capture.sampling_rate, channels=out, stage="pdm"
    )


def _cic_channel_int(x: np.ndarray, order: int, decimation: int) -> np.ndarray:
    # Integer accumulators with two's-complement wraparound; the combs
    # cancel the wraps exactly, matching the direct box-filter convolution.
    acc = x.astype(np.int64)
    with np.errstate(over="ignore"):
        for _ in range(order):
            acc = np.cumsum(acc)
        acc = acc[::decimation]
        for _ in range(order):
            acc = np.diff(acc, prepend=np.int64(0))
    return acc


def _cic_channel_float(x: np.ndarray, order: int, decimation: int) -> np.ndarray:
    acc = x.astype(np.float64)
    for _ in range(order):
        acc = np.cumsum(acc)
    acc = acc[::decimation]
    for _ in range(order):
        acc = np.diff(acc, prepend=0.0)
    return acc


def cic_decimate(capture: MicCapture, order: int, decimation: int) -> MicCapture:
    """Cascaded integrator-comb decimation, normalized to unit DC gain.

    Integer inputs (PDM streams) run through exact integer accumulators, so
    the result equals the N-fold box-filter convolution with no rounding
    drift.
    """
    if order < 1 or decimation < 1:
        raise ParameterError("order and decimation must be >= 1")
    if capture.n_samples < decimation:
        raise ParameterError(
            f"capture of {capture.n_samples} samples is shorter than the "
            f"decimation factor {decimation}"
        )
    gain = float(decimation) ** order
    integral = np.issubdtype(capture.channels.dtype, np.integer)
    rows = []
    for m in range(capture.n_channels):
        ch = capture.channels[m]
        if integral:
            rows.append(_cic_channel_int(ch, order, decimation) / gain)
        else:
            rows.append(_cic_channel_float(ch, order, decimation) / gain)
    return MicCapture(
        sampling_rate=capture.sampling_rate / decimation,
        channels=np.stack(rows),
        stage="post_cic",
    )


def fir_taps(order: int, decimation: int, fs_in: float) -> np.ndarray:
    """Hamming-windowed-sinc low-pass taps, cutoff 0.9x the output Nyquist."""
    cutoff = 0.9 * (fs_in / decimation) / 2.0
    return firwin(order + 1, cutoff, window="hamming", fs=fs_in)


def fir_decimate(capture: MicCapture, order: int, decimation: int) -> MicCapture:
    """Linear-phase low-pass FIR followed by decimation; unit DC gain."""
    if order < 1 or decimation < 1:
        raise ParameterError("order and decimation must be >= 1")
    if capture.n_samples < order + 1:
        raise ParameterError(
            f"capture of {capture.n_samples} samples is shorter than the "
            f"{order + 1}-tap filter"
        )
    taps = fir_taps(order, decimation, capture.sampling_rate)
    rows = [
        np.convolve(capture.channels[m], taps)[: capture.n_samples][::decimation]
        for m in range(capture.n_channels)
    ]
    return MicCapture(
        sampling_rate=capture.sampling_rate / decimation,
        channels=np.stack(rows),
        stage="post_fir",
    )


def demodulation_chain(capture: MicCapture, config: FilterChainConfig) -> MicCapture:
    """CIC then FIR decimation, recovering PCM from a PDM capture."""
    if capture.stage != "pdm":
        raise ParameterError("demodulation chain expects a pdm capture")
    stage1 = cic_decimate(capture, config.cic_order, config.cic_decimation)
    return fir_decimate(stage1, config.fir_order, config.fir_decimation)


def chain_group_delay_s(config: FilterChainConfig) -> float:
    """Total group delay of the chain in seconds (both filters linear phase)."""
    cic = config.cic_order * (config.cic_decimation - 1) / 2.0
    fir = (config.fir_order / 2.0) * config.cic_decimation
    return (cic + fir) / config.fs_in


def load_scene(path: str | Path) -> Scene:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].split("#", 1)[0].strip() != "acoumap-scene v1":
        raise SchemaError(f"{path}: missing 'acoumap-scene v1' header")
    start = end = None
    sources = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        try:
            if key == "start_time_s" and len(rest) == 1:
                start = float(rest[0])
            elif key == "end_time_s" and len(rest) == 1:
                end = float(rest[0])
            elif key == "source" and len(rest) == 6:
                az, el, dist, freq, amp, phase = map(float, rest)
                sources.append(SoundSource(az, el, dist, freq, amp, phase))
            else:
                raise SchemaError(f"{path}:{lineno}: unrecognized record {key!r}")
        except ParameterError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from exc
        except ValueError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    if start is None or end is None:
        raise SchemaError(f"{path}: start_time_s and end_time_s are required")
    if not sources:
        raise SchemaError(f"{path}: no source records")
    return Scene(tuple(sources), start_time=start, end_time=end)


def save_scene(scene: Scene, path: str | Path) -> None:
    lines = ["acoumap-scene v1"]
    lines.append(f"start_time_s {scene.start_time!r}")
    lines.append(f"end_time_s {scene.end_time!r}")
    for s in scene.sources:
        lines.append(
            f"source {s.azimuth_deg!r} {s.elevation_deg!r} {s.distance_m!r} "
            f"{s.frequency_hz!r} {s.amplitude!r} {s.phase_rad!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def mirrored_scene(scene: Scene) -> Scene:
    """The scene reflected in azimuth (x -> -x)."""
    return replace(
        scene,
        sources=tuple(
            replace(s, azimuth_deg=-s.azimuth_deg) for s in scene.sources
        ),
    )
