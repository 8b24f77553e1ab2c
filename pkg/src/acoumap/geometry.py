"""Microphone array layouts, steering grids, and delay-index arithmetic.

All positions are in meters, angles in degrees unless noted, sampling rates
in Hz.  The coordinate convention is: the array lies in the z = 0 plane and
broadside is +z.  Steering directions for imaging grids are parameterized by
azimuth (rotation toward +x) and elevation (rotation toward +y); directions
for in-plane polar sweeps live in the x-y plane.

Array layouts can be loaded from a structured text file (one microphone per
record, ``x y z`` in meters, ``#`` comments); the built-in UMAP layout is
addressable by the name ``"umap"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError, SchemaError
from .numutil import round_half_away_from_zero

SPEED_OF_SOUND = 343.0
"""Default speed of sound in air, m/s."""

MAX_MIC_RADIUS_M = 1.0
"""Sanity bound on microphone distance from the array origin."""

# UMAP radii derived from the two published pairwise distances: the four
# inner microphones sit on a square whose side (adjacent spacing) is
# 23.20 mm, so the inner radius is 23.20/sqrt(2) mm; the longest pairwise
# distance 81.28 mm is the outer-circle diameter.
UMAP_MIN_DISTANCE_M = 0.02320
UMAP_MAX_DISTANCE_M = 0.08128
UMAP_INNER_RADIUS_M = UMAP_MIN_DISTANCE_M / math.sqrt(2.0)
UMAP_OUTER_RADIUS_M = UMAP_MAX_DISTANCE_M / 2.0


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Microphone:
    """A single microphone at a fixed position (meters)."""

    position: np.ndarray

    def __post_init__(self):
        pos = _freeze(np.asarray(self.position, dtype=np.float64).reshape(3))
        object.__setattr__(self, "position", pos)
        if not np.all(np.isfinite(pos)):
            raise ParameterError("microphone position must be finite")
        if np.linalg.norm(pos) >= MAX_MIC_RADIUS_M:
            raise ParameterError(
                f"microphone position magnitude {np.linalg.norm(pos):.3f} m "
                f"exceeds the {MAX_MIC_RADIUS_M} m array-scale bound"
            )


@dataclass(frozen=True, eq=False)
class MicrophoneArray:
    """An ordered collection of microphones.

    Order is significant: microphone ``m`` indexes channel ``m`` of every
    capture produced for this array.
    """

    microphones: tuple[Microphone, ...]
    name: str = "custom"

    def __post_init__(self):
        mics = tuple(self.microphones)
        object.__setattr__(self, "microphones", mics)
        if len(mics) < 1:
            raise ParameterError("array needs at least one microphone")
        pos = self.positions
        for i in range(len(mics)):
            for j in range(i + 1, len(mics)):
                if np.array_equal(pos[i], pos[j]):
                    raise ParameterError(
                        f"microphones {i} and {j} share a position"
                    )

    @property
    def size(self) -> int:
        return len(self.microphones)

    @property
    def positions(self) -> np.ndarray:
        """(M, 3) position matrix in microphone order."""
        return np.array([m.position for m in self.microphones])

    def pairwise_distances(self) -> np.ndarray:
        p = self.positions
        d = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)
        return d[np.triu_indices(self.size, k=1)]


@dataclass(frozen=True, eq=False)
class SteeringVector:
    """A unit direction the array is steered toward."""

    direction: np.ndarray

    def __post_init__(self):
        d = _freeze(np.asarray(self.direction, dtype=np.float64).reshape(3))
        object.__setattr__(self, "direction", d)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ParameterError(
                f"steering vector norm {np.linalg.norm(d)!r} is not 1"
            )


def direction_from_azel(azimuth_deg: float, elevation_deg: float) -> np.ndarray:
    """Unit vector for an azimuth/elevation pair around broadside (+z)."""
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    return np.array(
        [math.cos(el) * math.sin(az), math.sin(el), math.cos(el) * math.cos(az)]
    )


def direction_in_plane(angle_deg: float) -> np.ndarray:
    """Unit vector in the array plane (z = 0) at the given polar angle."""
    a = math.radians(angle_deg)
    return np.array([math.cos(a), math.sin(a), 0.0])


def build_umap_array() -> MicrophoneArray:
    """The 12-microphone UMAP layout: 4 on an inner circle, 8 on an outer.

    Positions are constructed quadrant-symmetric so the layout mirrors
    bit-exactly under x -> -x and y -> -y.  The inner circle is rotated 45
    degrees relative to the outer one.
    """
    b = UMAP_MIN_DISTANCE_M / 2.0  # inner radius / sqrt(2), exact in binary
    inner = [(b, b), (-b, b), (-b, -b), (b, -b)]
    r = UMAP_OUTER_RADIUS_M
    a = r / math.sqrt(2.0)
    outer = [(r, 0.0), (a, a), (0.0, r), (-a, a),
             (-r, 0.0), (-a, -a), (0.0, -r), (a, -a)]
    mics = tuple(
        Microphone(np.array([x, y, 0.0])) for x, y in inner + outer
    )
    return MicrophoneArray(mics, name="umap")


def delay_index(
    mic: Microphone, direction: SteeringVector, c: float, fs: float
) -> float:
    """Real-valued sample-index delay for one microphone and direction.

    Equals ``fs * dot(position, direction) / c``: positive when the
    microphone sits on the source side of the array (it hears the wavefront
    early, so its stream must be delayed).
    """
    if c <= 0.0 or fs <= 0.0:
        raise ParameterError("speed of sound and sampling rate must be > 0")
    return float(fs * np.dot(mic.position, direction.direction) / c)


@dataclass(frozen=True)
class DelayDecomposition:
    """Integer/fractional split of a real delay index.

    ``alpha`` always satisfies ``floor_index + alpha == exact`` in float
    arithmetic.  When the n-bit weight rounds up to ``2**n`` both indices
    are bumped by one and ``alpha_frac`` resets to zero, which lets
    ``alpha`` dip just below 0 (never beyond ``-2**-(n+1)``).
    """

    exact: float
    floor_index: int
    ceil_index: int
    alpha: float
    alpha_frac: int
    frac_bits: int


def delay_decomposition(exact: float, frac_bits: int) -> DelayDecomposition:
    """Split a real delay index into floor/ceil indices and weights.

    ``alpha_frac`` is ``alpha * 2**frac_bits`` rounded half away from zero;
    a result of ``2**frac_bits`` bumps both indices up by one and resets the
    weight to zero so adjacent rounding regions never overlap.
    """
    if frac_bits < 0:
        raise ParameterError("frac_bits must be >= 0")
    exact = float(exact)
    floor_index = math.floor(exact)
    ceil_index = math.ceil(exact)
    alpha = exact - floor_index
    scale = 1 << frac_bits
    alpha_frac = math.floor(alpha * scale + 0.5)
    if alpha_frac == scale:
        floor_index += 1
        ceil_index += 1
        alpha_frac = 0
    return DelayDecomposition(
        exact=exact,
        floor_index=floor_index,
        ceil_index=ceil_index,
        alpha=exact - floor_index,
        alpha_frac=alpha_frac,
        frac_bits=frac_bits,
    )


@dataclass(frozen=True, eq=False)
class SteeringGrid:
    """A width x height grid of unit steering directions.

    Pixel (x, y) maps to azimuth/elevation uniformly spaced over
    [-fov/2, +fov/2]; the center pixel points along broadside and row 0 is
    the top of the image (+elevation).  The right half of the grid is
    constructed by mirroring the left half so azimuth symmetry is exact.
    """

    width: int
    height: int
    fov_azimuth: float
    fov_elevation: float
    azimuth_deg: np.ndarray
    elevation_deg: np.ndarray
    directions: np.ndarray  # (height, width, 3)

    def direction(self, x: int, y: int) -> SteeringVector:
        return SteeringVector(self.directions[y, x])

    @property
    def n_directions(self) -> int:
        return self.width * self.height

    def flat_directions(self) -> np.ndarray:
        """(width*height, 3) directions in row-major (y, x) order."""
        return self.directions.reshape(-1, 3)


def _axis_angles(n: int, fov_deg: float) -> np.ndarray:
    # (2i - (n-1))/2 is an exact half-integer, so the grid is exactly
    # antisymmetric about its center.
    if n == 1:
        return np.zeros(1)
    offsets = (2.0 * np.arange(n) - (n - 1)) / 2.0
    return offsets * (fov_deg / (n - 1))


def build_steering_grid(
    width: int, height: int, fov_azimuth: float, fov_elevation: float
) -> SteeringGrid:
    if width < 1 or height < 1:
        raise ParameterError("grid dimensions must be >= 1")
    for fov in (fov_azimuth, fov_elevation):
        if not 0.0 < fov <= 180.0:
            raise ParameterError("field of view must be in (0, 180] degrees")
    az = _axis_angles(width, fov_azimuth)
    el = _axis_angles(height, fov_elevation)[::-1].copy()  # row 0 at +el
    az_r = np.radians(az)
    el_r = np.radians(el)
    ux = np.cos(el_r)[:, None] * np.sin(az_r)[None, :]
    uy = np.broadcast_to(np.sin(el_r)[:, None], (height, width)).copy()
    uz = np.cos(el_r)[:, None] * np.cos(az_r)[None, :]
    # Mirror the left half onto the right half so x -> width-1-x is an
    # exact azimuth reflection regardless of libm symmetry.
    half = width // 2
    if half:
        ux[:, width - half:] = -ux[:, half - 1::-1]
        uy[:, width - half:] = uy[:, half - 1::-1]
        uz[:, width - half:] = uz[:, half - 1::-1]
    directions = np.stack([ux, uy, uz], axis=-1)
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    return SteeringGrid(
        width=width,
        height=height,
        fov_azimuth=float(fov_azimuth),
        fov_elevation=float(fov_elevation),
        azimuth_deg=_freeze(az),
        elevation_deg=_freeze(el),
        directions=_freeze(directions),
    )


@dataclass(frozen=True, eq=False)
class DelayTable:
    """Precomputed delay decompositions for every (direction, microphone).

    Immutable after construction.  ``exact`` drives the rounded and
    double-precision beamforming modes; ``floor_index``/``alpha_frac`` hold
    the n-bit fractional view (with overflow bumps applied) for the
    fractional mode.
    """

    directions: np.ndarray  # (N, 3)
    exact: np.ndarray  # (N, M) float64
    floor_index: np.ndarray  # (N, M) int64, bumped for alpha_frac overflow
    ceil_index: np.ndarray  # (N, M) int64
    alpha_frac: np.ndarray  # (N, M) int64 in [0, 2**frac_bits)
    frac_bits: int
    sampling_rate: float
    speed_of_sound: float
    grid_shape: tuple[int, int] | None = None  # (height, width) when gridded

    @property
    def n_directions(self) -> int:
        return self.exact.shape[0]

    @property
    def n_microphones(self) -> int:
        return self.exact.shape[1]

    @property
    def max_abs_exact(self) -> float:
        return float(np.max(np.abs(self.exact)))

    @property
    def margin(self) -> int:
        """Samples to trim from each end so every delayed index is valid."""
        return int(math.ceil(self.max_abs_exact)) + 2

    def worst_microphone(self) -> int:
        """Index of the microphone with the largest delay magnitude."""
        return int(np.argmax(np.max(np.abs(self.exact), axis=0)))

    def entry(self, dir_index: int, mic_index: int) -> DelayDecomposition:
        f = int(self.floor_index[dir_index, mic_index])
        e = float(self.exact[dir_index, mic_index])
        return DelayDecomposition(
            exact=e,
            floor_index=f,
            ceil_index=int(self.ceil_index[dir_index, mic_index]),
            alpha=e - f,
            alpha_frac=int(self.alpha_frac[dir_index, mic_index]),
            frac_bits=self.frac_bits,
        )


def build_delay_table(
    array: MicrophoneArray,
    steering,
    c: float = SPEED_OF_SOUND,
    fs: float = 1.0,
    frac_bits: int = 0,
) -> DelayTable:
    """Build the delay table for a grid or an (N, 3) list of directions."""
    if c <= 0.0 or fs <= 0.0:
        raise ParameterError("speed of sound and sampling rate must be > 0")
    if frac_bits < 0:
        raise ParameterError("frac_bits must be >= 0")
    grid_shape = None
    if isinstance(steering, SteeringGrid):
        dirs = steering.flat_directions()
        grid_shape = (steering.height, steering.width)
    else:
        dirs = np.asarray(steering, dtype=np.float64).reshape(-1, 3)
    exact = (fs / c) * (dirs @ array.positions.T)
    floor = np.floor(exact)
    ceil = np.ceil(exact)
    alpha = exact - floor
    scale = float(1 << frac_bits)
    alpha_frac = np.floor(alpha * scale + 0.5)
    bump = alpha_frac >= scale
    floor = floor + bump
    ceil = ceil + bump
    alpha_frac[bump] = 0.0
    return DelayTable(
        directions=_freeze(dirs),
        exact=_freeze(exact),
        floor_index=floor.astype(np.int64),
        ceil_index=ceil.astype(np.int64),
        alpha_frac=alpha_frac.astype(np.int64),
        frac_bits=frac_bits,
        sampling_rate=float(fs),
        speed_of_sound=float(c),
        grid_shape=grid_shape,
    )


def rounded_index(exact):
    """Nearest-integer delay index, ties away from zero."""
    return round_half_away_from_zero(exact)


def load_array(source: str | Path) -> MicrophoneArray:
    """Load an array layout by built-in name or from a positions file.

    The file format is one microphone per line, ``x y z`` in meters
    (whitespace or comma separated), with ``#`` comments and blank lines
    ignored.
    """
    if isinstance(source, str) and source.lower() == "umap":
        return build_umap_array()
    path = Path(source)
    mics = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 3:
            raise SchemaError(
                f"{path}:{lineno}: expected 3 coordinates, got {len(parts)}"
            )
        try:
            xyz = [float(p) for p in parts]
        except ValueError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from exc
        mics.append(Microphone(np.array(xyz)))
    if not mics:
        raise SchemaError(f"{path}: no microphone records found")
    return MicrophoneArray(tuple(mics), name=path.stem)


def save_array(array: MicrophoneArray, path: str | Path) -> None:
    lines = [f"# microphone positions for {array.name} (x y z, meters)"]
    for m in array.microphones:
        x, y, z = (float(v) for v in m.position)
        lines.append(f"{x!r} {y!r} {z!r}")
    Path(path).write_text("\n".join(lines) + "\n")
