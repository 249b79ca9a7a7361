"""Geometric multipath channels over ideal or impaired linear arrays.

Antenna positions are expressed in wavelengths, so the wavenumber times the
wavelength is the constant 2*pi and the phase of antenna m for a plane wave
from angle phi is ``2*pi*d_m*cos(phi) + dtheta_m``.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .array_core import ConfigError

__all__ = [
    "IngestionError",
    "GenerationError",
    "ArrayGeometry",
    "PathList",
    "ChannelSet",
    "ChannelConfig",
    "sample_impaired_geometry",
    "array_response",
    "synthesize_channel",
    "sample_paths",
    "sample_user_channels",
    "save_channels",
    "load_channels",
    "save_geometry",
    "load_geometry",
    "channel_correlation",
]

WAVENUMBER_TIMES_LAMBDA = 2.0 * np.pi
MAX_GEOMETRY_ATTEMPTS = 10**5


class IngestionError(ValueError):
    """A channel or geometry file could not be parsed."""


class GenerationError(RuntimeError):
    """Random generation could not satisfy its constraints."""


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """Linear array: positions d_m (wavelengths) and phase mismatches (rad)."""

    positions: np.ndarray
    phase_offsets: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        off = np.array(self.phase_offsets, dtype=float)
        if pos.ndim != 1 or pos.size == 0 or off.shape != pos.shape:
            raise ConfigError("positions and phase_offsets must be non-empty 1-D arrays of equal length")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(off))):
            raise ConfigError("geometry entries must be finite")
        if np.any(np.diff(pos) <= 0):
            raise ConfigError("antenna positions must be strictly increasing")
        pos.setflags(write=False)
        off.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "phase_offsets", off)

    @classmethod
    def ideal(cls, num_antennas: int, spacing: float = 0.5) -> "ArrayGeometry":
        if num_antennas < 1:
            raise ConfigError("num_antennas must be >= 1")
        if spacing <= 0:
            raise ConfigError("spacing must be positive")
        return cls(np.arange(num_antennas) * spacing, np.zeros(num_antennas))

    @property
    def num_antennas(self) -> int:
        return len(self.positions)

    def to_dict(self) -> dict:
        return {
            "positions_wavelengths": self.positions.tolist(),
            "phase_offsets_rad": self.phase_offsets.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ArrayGeometry":
        try:
            return cls(data["positions_wavelengths"], data["phase_offsets_rad"])
        except KeyError as exc:
            raise IngestionError(f"geometry document is missing field {exc}") from None

    def __eq__(self, other):
        if not isinstance(other, ArrayGeometry):
            return NotImplemented
        return np.array_equal(self.positions, other.positions) and np.array_equal(
            self.phase_offsets, other.phase_offsets
        )


@dataclass(frozen=True, eq=False)
class PathList:
    """Complex path gains and angles of arrival (radians, in (0, pi))."""

    gains: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        gains = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        angles = np.atleast_1d(np.asarray(self.angles, dtype=float))
        if gains.ndim != 1 or gains.size == 0 or angles.shape != gains.shape:
            raise ConfigError("a path list needs at least one path and matching gains/angles")
        if not np.all(np.isfinite(gains)):
            raise ConfigError("path gains must be finite")
        if np.any(angles <= 0) or np.any(angles >= np.pi):
            raise ConfigError("angles of arrival must lie in (0, pi)")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "angles", angles)

    def __len__(self):
        return len(self.gains)

    def __add__(self, other: "PathList") -> "PathList":
        return PathList(
            np.concatenate([self.gains, other.gains]),
            np.concatenate([self.angles, other.angles]),
        )


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Non-empty stack of user channels, shape (num_users, M)."""

    channels: np.ndarray

    def __post_init__(self):
        h = np.array(self.channels, dtype=complex)
        if h.ndim == 1:
            h = h[None, :]
        if h.ndim != 2 or h.shape[0] == 0 or h.shape[1] == 0:
            raise ConfigError("a channel set must hold at least one non-empty channel")
        h.setflags(write=False)
        object.__setattr__(self, "channels", h)

    @property
    def num_users(self) -> int:
        return self.channels.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.channels.shape[1]

    def __len__(self):
        return self.num_users

    def __iter__(self):
        return iter(self.channels)

    def __eq__(self, other):
        if not isinstance(other, ChannelSet):
            return NotImplemented
        return np.array_equal(self.channels, other.channels)


@dataclass
class ChannelConfig:
    """Statistical description of synthetic user channels.

    ``gain_mode`` is ``"rayleigh"`` (i.i.d. circular Gaussian path gains) or
    ``"los"`` (path 1 carries ``los_power_fraction`` of the total power, the
    remaining power is split randomly across the other paths).  When
    ``aoa_center_deg`` is set, every user's first path arrives within
    ``angular_spread_deg`` (full width) of that center; otherwise first-path
    angles are uniform over ``aoa_sector_deg``.  Scattered paths are always
    uniform over the sector.
    """

    num_users: int = 1
    num_paths: int = 5
    gain_mode: str = "los"
    los_power_fraction: float = 0.8
    aoa_sector_deg: Tuple[float, float] = (30.0, 150.0)
    aoa_center_deg: Optional[float] = None
    angular_spread_deg: float = 0.0
    normalize: bool = False

    def validate(self):
        if self.num_users < 1:
            raise ConfigError("num_users must be >= 1")
        if self.num_paths < 1:
            raise ConfigError("num_paths must be >= 1")
        if self.gain_mode not in ("rayleigh", "los"):
            raise ConfigError(f"unknown gain_mode {self.gain_mode!r}")
        if not 0.0 < self.los_power_fraction <= 1.0:
            raise ConfigError("los_power_fraction must lie in (0, 1]")
        lo, hi = self.aoa_sector_deg
        if not 0.0 < lo < hi < 180.0:
            raise ConfigError("aoa_sector_deg must satisfy 0 < lo < hi < 180")
        if self.angular_spread_deg < 0:
            raise ConfigError("angular_spread_deg must be non-negative")
        if self.aoa_center_deg is not None:
            c, half = self.aoa_center_deg, self.angular_spread_deg / 2
            if not (0.0 < c - half and c + half < 180.0):
                raise ConfigError("aoa_center_deg +- spread/2 must stay inside (0, 180)")


def sample_impaired_geometry(
    num_antennas: int,
    spacing: float = 0.5,
    sigma_d: float = 0.0,
    sigma_p: float = 0.0,
    seed=None,
    max_attempts: int = MAX_GEOMETRY_ATTEMPTS,
) -> ArrayGeometry:
    """Draw a fixed random array realization.

    Positions d_m ~ N((m-1) d, sigma_d^2), offsets ~ N(0, sigma_p^2).  The
    whole position vector is redrawn until it is strictly increasing;
    sorting would change the marginals.
    """
    if num_antennas < 1:
        raise ConfigError("num_antennas must be >= 1")
    if spacing <= 0:
        raise ConfigError("spacing must be positive")
    if sigma_d < 0 or sigma_p < 0:
        raise ConfigError("standard deviations must be non-negative")
    rng = np.random.default_rng(seed)
    nominal = np.arange(num_antennas) * spacing
    for _ in range(max_attempts):
        positions = nominal + sigma_d * rng.standard_normal(num_antennas)
        if np.all(np.diff(positions) > 0):
            break
    else:
        raise GenerationError(
            f"no ordered antenna positions after {max_attempts} draws "
            f"(sigma_d={sigma_d} too large for spacing={spacing})"
        )
    offsets = sigma_p * rng.standard_normal(num_antennas)
    return ArrayGeometry(positions, offsets)


def array_response(geometry: ArrayGeometry, phi) -> np.ndarray:
    """Response vector(s) a(phi).  Scalar phi gives (M,), an array gives (..., M)."""
    phi = np.asarray(phi, dtype=float)
    phase = WAVENUMBER_TIMES_LAMBDA * np.multiply.outer(np.cos(phi), geometry.positions)
    return np.exp(1j * (phase + geometry.phase_offsets))


def synthesize_channel(geometry: ArrayGeometry, paths: PathList) -> np.ndarray:
    """h = sum_l alpha_l a(phi_l)."""
    return paths.gains @ array_response(geometry, paths.angles)


def sample_paths(config: ChannelConfig, rng, first_angle: Optional[float] = None) -> PathList:
    """Draw one user's path list according to ``config``."""
    num = config.num_paths
    lo, hi = np.deg2rad(config.aoa_sector_deg)
    angles = rng.uniform(lo, hi, size=num)
    if first_angle is not None:
        angles[0] = first_angle
    gains = (rng.standard_normal(num) + 1j * rng.standard_normal(num)) / np.sqrt(2 * num)
    if config.gain_mode == "los":
        p = config.los_power_fraction
        gains[0] = np.sqrt(p) * np.exp(1j * rng.uniform(-np.pi, np.pi))
        if num > 1:
            scatter = gains[1:]
            gains[1:] = scatter * np.sqrt((1.0 - p) / np.sum(np.abs(scatter) ** 2))
    return PathList(gains, angles)


def sample_user_channels(geometry: ArrayGeometry, config: ChannelConfig, seed=None) -> ChannelSet:
    """Generate a deterministic set of synthetic user channels."""
    config.validate()
    rng = np.random.default_rng(seed)
    channels = []
    for _ in range(config.num_users):
        first = None
        if config.aoa_center_deg is not None:
            half = config.angular_spread_deg / 2
            first = np.deg2rad(config.aoa_center_deg + rng.uniform(-half, half))
        h = synthesize_channel(geometry, sample_paths(config, rng, first))
        if config.normalize:
            h = h * np.sqrt(geometry.num_antennas) / np.linalg.norm(h)
        channels.append(h)
    return ChannelSet(np.array(channels))


def channel_correlation(h1, h2) -> float:
    """|h1^H h2| / (||h1|| ||h2||)."""
    return float(abs(np.vdot(h1, h2)) / (np.linalg.norm(h1) * np.linalg.norm(h2)))


def save_channels(channels: ChannelSet, path, comment: Optional[str] = None):
    """Write one channel per row as re_1, im_1, ..., re_M, im_M."""
    h = channels.channels
    inter = np.empty((h.shape[0], 2 * h.shape[1]))
    inter[:, 0::2] = h.real
    inter[:, 1::2] = h.imag
    with open(path, "w") as f:
        if comment:
            for line in comment.splitlines():
                f.write(f"# {line}\n")
        for row in inter:
            f.write(",".join(repr(float(v)) for v in row) + "\n")


def load_channels(path) -> ChannelSet:
    """Read the CSV written by :func:`save_channels`.

    Blank lines and ``#`` comments are skipped.  Errors name the offending
    1-based line number.
    """
    rows = []
    width = None
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IngestionError(f"{path}: cannot read channel file: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            values = [float(v) for v in line.split(",")]
        except ValueError:
            raise IngestionError(f"{path}:{lineno}: non-numeric entry") from None
        if len(values) % 2:
            raise IngestionError(
                f"{path}:{lineno}: odd number of values ({len(values)}); expected re/im pairs"
            )
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise IngestionError(
                f"{path}:{lineno}: dimension mismatch ({len(values) // 2} antennas, "
                f"expected {width // 2})"
            )
        if not np.all(np.isfinite(values)):
            raise IngestionError(f"{path}:{lineno}: non-finite value")
        rows.append(values)
    if not rows:
        raise IngestionError(f"{path}: no channels found")
    arr = np.array(rows)
    return ChannelSet(arr[:, 0::2] + 1j * arr[:, 1::2])


def save_geometry(geometry: ArrayGeometry, path):
    Path(path).write_text(json.dumps(geometry.to_dict(), indent=2) + "\n")


def load_geometry(path) -> ArrayGeometry:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestionError(f"{path}: cannot read geometry: {exc}") from None
    try:
        return ArrayGeometry.from_dict(data)
    except ConfigError as exc:
        raise IngestionError(f"{path}: invalid geometry: {exc}") from None

