"""Beamforming gain objectives and analytic baselines.

All gains are linear power gains |w^H h|^2 with unit-norm beams.  The phase
vector that maximizes |w^H h| under the constant-modulus constraint is
theta_m = angle(h_m): then every term conj(w_m) h_m = |h_m|/sqrt(M) is a
positive real and the gain reaches (sum |h_m|)^2 / M.
"""

import itertools
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .array_core import PhaseCodebook, beam_from_phases, quantize_phases, wrap_phase
from .channel import WAVENUMBER_TIMES_LAMBDA, ArrayGeometry, ChannelSet

__all__ = [
    "UsageError",
    "SearchBudgetError",
    "GainReport",
    "gain",
    "average_gain",
    "per_user_gains",
    "phase_gains",
    "snr",
    "egc_beam",
    "egc_gain",
    "quantized_egc_beam",
    "steering_angles",
    "beamsteering_codebook",
    "best_codebook_beam",
    "exhaustive_search",
    "to_db",
    "save_codebook_csv",
]

DEFAULT_SEARCH_BUDGET = 10**7


class UsageError(ValueError):
    """Invalid arguments to a metric (dimension mismatch, empty sets...)."""


class SearchBudgetError(UsageError):
    """The exhaustive search space exceeds the configured budget."""

    def __init__(self, required: int, budget: int):
        super().__init__(
            f"exhaustive search needs {required} evaluations, budget is {budget}"
        )
        self.required = required
        self.budget = budget


@dataclass
class GainReport:
    per_user: np.ndarray
    average: float
    snr: Optional[np.ndarray] = None
    egc_average: Optional[float] = None

    @property
    def ratio_to_egc(self) -> Optional[float]:
        if self.egc_average is None:
            return None
        return self.average / self.egc_average

    def to_dict(self) -> dict:
        out = {
            "per_user_gain": self.per_user.tolist(),
            "average_gain": self.average,
            "average_gain_db": to_db(self.average),
        }
        if self.snr is not None:
            out["snr"] = self.snr.tolist()
        if self.egc_average is not None:
            out["egc_average_gain"] = self.egc_average
            out["ratio_to_egc"] = self.ratio_to_egc
        return out


def to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def _channel_matrix(channels) -> np.ndarray:
    if isinstance(channels, ChannelSet):
        return channels.channels
    h = np.asarray(channels, dtype=complex)
    if h.ndim == 1:
        h = h[None, :]
    return h


def gain(w, h) -> float:
    """|w^H h|^2."""
    w = np.asarray(w)
    h = np.asarray(h)
    if w.shape != h.shape or w.ndim != 1:
        raise UsageError(f"beam shape {w.shape} does not match channel shape {h.shape}")
    return float(abs(np.vdot(w, h)) ** 2)


def per_user_gains(w, channels) -> np.ndarray:
    w = np.asarray(w)
    h = _channel_matrix(channels)
    if h.shape[0] == 0:
        raise UsageError("empty channel set")
    if w.ndim != 1 or h.shape[1] != w.shape[0]:
        raise UsageError(f"beam of length {w.shape} does not match {h.shape[1]} antennas")
    return np.abs(h @ w.conj()) ** 2


def average_gain(w, channels) -> float:
    """Mean over users of |w^H h_u|^2 (the learning objective)."""
    return float(np.mean(per_user_gains(w, channels)))


def phase_gains(phases, channels) -> np.ndarray:
    """Average gain for a batch of phase vectors, shape (..., M) -> (...)."""
    h = _channel_matrix(channels)
    w = beam_from_phases(phases)
    return np.mean(np.abs(w.conj() @ h.T) ** 2, axis=-1)


def snr(w, h, rho: float) -> float:
    """Post-combining SNR = gain * P_x / sigma_n^2 (unit-norm beam)."""
    if not rho > 0:
        raise UsageError(f"rho must be positive, got {rho}")
    return gain(w, h) * rho


def egc_gain(h) -> float:
    """(sum_m |h_m|)^2 / M, the constant-modulus upper bound for one channel."""
    h = np.asarray(h, dtype=complex)
    return float(np.sum(np.abs(h)) ** 2 / h.shape[-1])


def egc_beam(h) -> Tuple[np.ndarray, float]:
    """Unquantized equal-gain beam (phases, gain) for a single channel."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 1:
        raise UsageError("egc_beam takes a single channel vector")
    if not np.any(h != 0):
        raise UsageError("equal gain combining is undefined for a zero channel")
    phases = np.angle(h)
    return phases, gain(beam_from_phases(phases), h)


def quantized_egc_beam(h, codebook: PhaseCodebook) -> Tuple[np.ndarray, float]:
    phases, _ = egc_beam(h)
    q = quantize_phases(phases, codebook)
    return q, gain(beam_from_phases(q), np.asarray(h, dtype=complex))


def steering_angles(num_beams: int) -> np.ndarray:
    """Angles whose cosines form the grid -1 + 2i/N, i = 0..N-1."""
    return np.arccos(-1.0 + 2.0 * np.arange(num_beams) / num_beams)


def beamsteering_codebook(
    geometry: ArrayGeometry,
    num_beams: int,
    codebook: Optional[PhaseCodebook] = None,
) -> np.ndarray:
    """Classical steering beams, one row of phases per beam.

    Beam i points at cos(phi_i) = -1 + 2i/N using the positions of
    ``geometry`` (pass the ideal geometry; classical codebooks ignore
    impairments).  Phases are wrapped and, when ``codebook`` is given,
    quantized.
    """
    if num_beams < 1:
        raise UsageError("num_beams must be >= 1")
    cosines = -1.0 + 2.0 * np.arange(num_beams) / num_beams
    phases = wrap_phase(WAVENUMBER_TIMES_LAMBDA * np.outer(cosines, geometry.positions))
    if codebook is not None:
        phases = quantize_phases(phases, codebook)
    return phases


def best_codebook_beam(beams, channels) -> Tuple[int, float]:
    """Index and average gain of the best row of ``beams``."""
    gains = phase_gains(beams, channels)
    i = int(np.argmax(gains))
    return i, float(gains[i])


def exhaustive_search(
    channels,
    num_antennas: int,
    codebook: PhaseCodebook,
    budget: int = DEFAULT_SEARCH_BUDGET,
    chunk_size: int = 1 << 16,
) -> Tuple[np.ndarray, float]:
    """Globally optimal quantized phase vector for the average-gain problem.

    Candidates are enumerated in lexicographic order of phase values.  Gains
    within 1e-12 (relative) of the maximum count as ties, since global phase
    rotations give mathematically equal gains that differ by rounding; the
    lexicographically smallest tied vector wins.
    """
    h = _channel_matrix(channels)
    if h.shape[1] != num_antennas:
        raise UsageError(f"channels have {h.shape[1]} antennas, expected {num_antennas}")
    total = codebook.size**num_antennas
    if total > budget:
        raise SearchBudgetError(total, budget)

    def chunks():
        it = itertools.product(range(codebook.size), repeat=num_antennas)
        while True:
            block = list(itertools.islice(it, chunk_size))
            if not block:
                return
            yield np.array(block, dtype=np.intp)

    best = -np.inf
    for idx in chunks():
        best = max(best, float(phase_gains(codebook.values[idx], h).max()))
    threshold = best * (1.0 - 1e-12)
    for idx in chunks():
        g = phase_gains(codebook.values[idx], h)
        hits = np.flatnonzero(g >= threshold)
        if hits.size:
            phases = codebook.values[idx[hits[0]]]
            return phases, float(g[hits[0]])
    raise AssertionError("unreachable")


def save_codebook_csv(beams, path):
    """One row of phases (radians) per beam."""
    np.savetxt(path, np.atleast_2d(beams), delimiter=",", fmt="%.17g")
