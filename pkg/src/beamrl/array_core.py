"""Phase codebooks, analog beams and nearest-neighbour phase quantization.

Phase vectors are plain 1-D float arrays (radians), beams are 1-D complex
arrays.  A phase vector is *quantized* with respect to a codebook when every
entry is one of the codebook values.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConfigError",
    "PhaseCodebook",
    "build_codebook",
    "wrap_phase",
    "circular_distance",
    "beam_from_phases",
    "quantize_phases",
    "quantize_indices",
    "is_quantized",
]

TWO_PI = 2.0 * np.pi
MAX_RESOLUTION_BITS = 16


class ConfigError(ValueError):
    """Raised for invalid configuration values."""


@dataclass(frozen=True, eq=False)
class PhaseCodebook:
    """The 2**r realizable phase-shifter values, ascending, in (-pi, pi]."""

    resolution_bits: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if values.shape != (2**self.resolution_bits,):
            raise ConfigError("codebook must hold exactly 2**r values")
        if np.any(np.diff(values) <= 0):
            raise ConfigError("codebook values must be strictly increasing")
        if values[0] <= -np.pi or values[-1] > np.pi:
            raise ConfigError("codebook values must lie in (-pi, pi]")

    @property
    def size(self) -> int:
        return len(self.values)

    @property
    def step(self) -> float:
        return TWO_PI / self.size

    @property
    def name(self) -> str:
        return f"uniform-{self.resolution_bits}bit"

    def __eq__(self, other):
        if not isinstance(other, PhaseCodebook):
            return NotImplemented
        return self.resolution_bits == other.resolution_bits and np.array_equal(
            self.values, other.values
        )

    def __hash__(self):
        return hash((self.resolution_bits, self.values.tobytes()))


def build_codebook(resolution_bits: int) -> PhaseCodebook:
    """Uniform r-bit codebook: -pi + 2*pi*k/2**r for k = 1..2**r.

    0 and pi are always members; -pi is excluded.
    """
    if isinstance(resolution_bits, bool) or int(resolution_bits) != resolution_bits:
        raise ConfigError(f"resolution_bits must be an integer, got {resolution_bits!r}")
    resolution_bits = int(resolution_bits)
    if not 1 <= resolution_bits <= MAX_RESOLUTION_BITS:
        raise ConfigError(
            f"resolution_bits must be in [1, {MAX_RESOLUTION_BITS}], got {resolution_bits}"
        )
    n = 2**resolution_bits
    k = np.arange(1, n + 1)
    values = -np.pi + TWO_PI * k / n
    # The last value must be pi exactly, not pi +- 1ulp.
    values[-1] = np.pi
    return PhaseCodebook(resolution_bits, values)


def wrap_phase(x):
    """Wrap angles into (-pi, pi]."""
    x = np.asarray(x, dtype=float)
    return x - TWO_PI * np.ceil((x - np.pi) / TWO_PI)


def circular_distance(a, b):
    """Absolute wrap-around angular distance, in [0, pi]."""
    return np.abs(wrap_phase(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def beam_from_phases(phases) -> np.ndarray:
    """Map a phase vector to the unit-norm constant-modulus beam e^{j theta}/sqrt(M)."""
    phases = np.asarray(phases, dtype=float)
    m = phases.shape[-1]
    return np.exp(1j * phases) / np.sqrt(m)


def quantize_indices(phases, codebook: PhaseCodebook) -> np.ndarray:
    """Index of the nearest codebook value for every entry of ``phases``.

    Distance is circular.  Equidistant candidates resolve to the larger value.
    Works on arrays of any shape.
    """
    x = wrap_phase(phases)
    dist = circular_distance(x[..., None], codebook.values)
    dmin = dist.min(axis=-1, keepdims=True)
    ties = dist <= dmin + 1e-12
    # Values are ascending, so the last tied index is the larger value.
    return codebook.size - 1 - np.argmax(ties[..., ::-1], axis=-1)


def quantize_phases(phases, codebook: PhaseCodebook) -> np.ndarray:
    """Project arbitrary real phases onto the codebook (k=1 nearest neighbour)."""
    return codebook.values[quantize_indices(phases, codebook)]


def is_quantized(phases, codebook: PhaseCodebook) -> bool:
    phases = np.asarray(phases, dtype=float)
    return bool(np.all(np.isin(phases, codebook.values)))
