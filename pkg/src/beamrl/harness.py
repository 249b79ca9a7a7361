"""Experiment orchestration: configs, training runs, baselines and exports."""

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .agent import AgentConfig, BeamEnvironment, DDPGAgent, StepLog
from .array_core import (
    ConfigError,
    PhaseCodebook,
    beam_from_phases,
    build_codebook,
    is_quantized,
    quantize_phases,
)
from .channel import (
    ArrayGeometry,
    ChannelConfig,
    ChannelSet,
    array_response,
    load_channels,
    load_geometry,
    sample_impaired_geometry,
    sample_user_channels,
    save_geometry,
)
from .metrics import (
    DEFAULT_SEARCH_BUDGET,
    GainReport,
    SearchBudgetError,
    UsageError,
    beamsteering_codebook,
    best_codebook_beam,
    egc_gain,
    exhaustive_search,
    phase_gains,
    to_db,
)
from .neural import NonFiniteError, save_checkpoint

log = logging.getLogger(__name__)

MILESTONES = (0.9, 0.95)


class TrainingError(RuntimeError):
    """Training aborted; the best beam found so far has been written out."""


@dataclass
class ArrayConfig:
    num_antennas: int = 32
    resolution_bits: int = 3
    geometry: str = "ideal"  # "ideal" | "impaired"
    spacing: float = 0.5
    sigma_d: float = 0.1
    sigma_p: float = 0.32 * np.pi
    geometry_file: Optional[str] = None


@dataclass
class SeedConfig:
    geometry: int = 0
    channel: int = 0
    agent: int = 0


@dataclass
class ExperimentConfig:
    array: ArrayConfig = field(default_factory=ArrayConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    channel_file: Optional[str] = None
    agent: AgentConfig = field(default_factory=AgentConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    steering_beams: int = 32
    search_budget: int = DEFAULT_SEARCH_BUDGET
    curve_every: int = 100
    output_dir: Optional[str] = None

    def validate(self):
        a = self.array
        if a.num_antennas < 1:
            raise ConfigError("array.num_antennas must be >= 1")
        build_codebook(a.resolution_bits)
        if a.geometry not in ("ideal", "impaired"):
            raise ConfigError(f"array.geometry must be 'ideal' or 'impaired', got {a.geometry!r}")
        if a.spacing <= 0 or a.sigma_d < 0 or a.sigma_p < 0:
            raise ConfigError("array spacing must be positive and sigmas non-negative")
        for name in ("geometry_file",):
            p = getattr(a, name)
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"array.{name} does not exist: {p}")
        if self.channel_file is not None and not Path(self.channel_file).is_file():
            raise ConfigError(f"channel_file does not exist: {self.channel_file}")
        if self.channel_file is None:
            self.channel.validate()
        self.agent.validate()
        if self.steering_beams < 1 or self.curve_every < 1:
            raise ConfigError("steering_beams and curve_every must be >= 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return _build_dataclass(cls, data, "")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def with_overrides(self, overrides: Dict[str, object]) -> "ExperimentConfig":
        """Copy with dotted-key overrides applied, e.g. ``{"agent.gamma": 0.5}``."""
        data = self.to_dict()
        for key, value in overrides.items():
            node = data
            parts = key.split(".")
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigError(f"unknown config section {key!r}")
                node = node[p]
            if parts[-1] not in node:
                raise ConfigError(f"unknown config key {key!r}")
            node[parts[-1]] = value
        return ExperimentConfig.from_dict(data)


def _build_dataclass(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {prefix or '<root>'} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown config keys under {prefix or '<root>'}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = known[name].default_factory() if callable(known[name].default_factory) else None
        if is_dataclass(default) and value is not None:
            kwargs[name] = _build_dataclass(type(default), value, f"{prefix}{name}.")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


@dataclass
class Scenario:
    """Everything a run needs that is derived from the config."""

    codebook: PhaseCodebook
    geometry: ArrayGeometry
    ideal_geometry: ArrayGeometry
    channels: ChannelSet


def build_geometry(config: ExperimentConfig) -> ArrayGeometry:
    a = config.array
    if a.geometry_file is not None:
        geometry = load_geometry(a.geometry_file)
    elif a.geometry == "impaired":
        geometry = sample_impaired_geometry(a.num_antennas, a.spacing, a.sigma_d, a.sigma_p,
                                            seed=config.seeds.geometry)
    else:
        geometry = ArrayGeometry.ideal(a.num_antennas, a.spacing)
    if geometry.num_antennas != a.num_antennas:
        raise ConfigError(f"geometry has {geometry.num_antennas} antennas, config says {a.num_antennas}")
    return geometry


def build_scenario(config: ExperimentConfig) -> Scenario:
    config.validate()
    a = config.array
    geometry = build_geometry(config)
    if config.channel_file is not None:
        channels = load_channels(config.channel_file)
    else:
        channels = sample_user_channels(geometry, config.channel, seed=config.seeds.channel)
    if channels.num_antennas != a.num_antennas:
        raise ConfigError(f"channels have {channels.num_antennas} antennas, config says {a.num_antennas}")
    return Scenario(build_codebook(a.resolution_bits), geometry,
                    ArrayGeometry.ideal(a.num_antennas, a.spacing), channels)


# -- baselines ------------------------------------------------------------


def egc_bound(channels: ChannelSet) -> float:
    """Mean per-user EGC gain; an upper bound on the average gain of any phase-only beam."""
    return float(np.mean([egc_gain(h) for h in channels.channels]))


def egc_phases(channels: ChannelSet) -> np.ndarray:
    """Unquantized equal-gain phases for a channel set.

    One user: the channel phases.  Several users: the phases of the
    principal eigenvector of the sample covariance.
    """
    h = channels.channels
    if h.shape[0] == 1:
        return np.angle(h[0])
    cov = h.T @ h.conj() / h.shape[0]
    _, vecs = np.linalg.eigh(cov)
    return np.angle(vecs[:, -1])


def evaluate_beam(phases, channels: ChannelSet, rho: Optional[float] = None) -> GainReport:
    """Per-user and average gain of ``phases`` plus the ratio to the EGC bound."""
    phases = np.asarray(phases, dtype=float)
    if phases.shape != (channels.num_antennas,):
        raise UsageError(f"beam has shape {phases.shape}, expected ({channels.num_antennas},)")
    per_user = np.array([phase_gains(phases, h[None, :]) for h in channels.channels], dtype=float)
    average = float(phase_gains(phases, channels))
    snr = None if rho is None else per_user * rho
    if rho is not None and not rho > 0:
        raise UsageError("rho must be positive")
    return GainReport(per_user, average, snr, egc_bound(channels))


def run_baselines(config: ExperimentConfig, scenario: Optional[Scenario] = None) -> dict:
    """EGC, quantized EGC, best steering beam and (when affordable) the exhaustive optimum."""
    sc = scenario or build_scenario(config)
    bound = egc_bound(sc.channels)
    table = {}

    def add(name, phases, g):
        table[name] = {"gain": g, "gain_db": float(to_db(g)), "ratio_to_egc": g / bound,
                       "phases": None if phases is None else np.asarray(phases).tolist()}

    add("egc_bound", None, bound)
    p = egc_phases(sc.channels)
    add("egc", p, float(phase_gains(p, sc.channels)))
    q = quantize_phases(p, sc.codebook)
    add("quantized_egc", q, float(phase_gains(q, sc.channels)))
    beams = beamsteering_codebook(sc.ideal_geometry, config.steering_beams, sc.codebook)
    i, g = best_codebook_beam(beams, sc.channels)
    add("steering_best", beams[i], g)
    table["steering_best"]["beam_index"] = i
    try:
        phases, g = exhaustive_search(sc.channels, config.array.num_antennas, sc.codebook,
                                      budget=config.search_budget)
        add("exhaustive", phases, g)
    except SearchBudgetError as exc:
        log.info("skipping exhaustive search: %s", exc)
    return table


# -- beam patterns --------------------------------------------------------


def default_angle_grid() -> np.ndarray:
    return np.arange(1.0, 180.0, 1.0)


def sample_beam_pattern(phases, geometry: ArrayGeometry, angles_deg=None) -> List[dict]:
    """Rows (angle_deg, gain, gain_db, gain_4th_root) of |w^H a(phi)|^2 on ``geometry``."""
    angles_deg = default_angle_grid() if angles_deg is None else np.asarray(angles_deg, dtype=float)
    if angles_deg.size == 0:
        raise UsageError("empty angle grid")
    if np.any(angles_deg <= 0) or np.any(angles_deg >= 180):
        raise UsageError("pattern angles must lie in (0, 180) degrees")
    phases = np.asarray(phases, dtype=float)
    if phases.shape != (geometry.num_antennas,):
        raise UsageError(f"beam has shape {phases.shape}, geometry has {geometry.num_antennas} antennas")
    a = array_response(geometry, np.deg2rad(angles_deg))
    g = np.abs(a @ beam_from_phases(phases).conj()) ** 2
    return [
        {"angle_deg": float(d), "gain": float(v), "gain_db": float(to_db(v)), "gain_4th_root": float(v**0.25)}
        for d, v in zip(angles_deg, g)
    ]


# -- training -------------------------------------------------------------


@dataclass
class RunResult:
    iterations: np.ndarray
    gain: np.ndarray
    best_gain: np.ndarray
    best_phases: np.ndarray
    baselines: dict
    egc_gain: float
    milestones: Dict[str, Optional[int]]
    duration_s: float

    @property
    def final_best_gain(self) -> float:
        return float(self.best_gain[-1])

    @property
    def final_ratio(self) -> float:
        return self.final_best_gain / self.egc_gain

    def to_dict(self) -> dict:
        return {
            "final_best_gain": self.final_best_gain,
            "final_best_gain_db": float(to_db(self.final_best_gain)),
            "final_ratio_to_egc": self.final_ratio,
            "egc_gain": self.egc_gain,
            "best_phases": self.best_phases.tolist(),
            "milestones": self.milestones,
            "baselines": self.baselines,
            "iterations": int(self.iterations[-1]),
            "duration_s": self.duration_s,
        }


def milestone_iterations(best_gain, reference: float, levels=MILESTONES) -> Dict[str, Optional[int]]:
    """First 1-based iteration at which ``best_gain`` reaches level * reference."""
    best_gain = np.asarray(best_gain)
    out = {}
    for level in levels:
        hits = np.flatnonzero(best_gain >= level * reference)
        out[f"{level:g}"] = int(hits[0]) + 1 if hits.size else None
    return out


def run_training(config: ExperimentConfig, output_dir=None, progress=None,
                 baselines: bool = True) -> RunResult:
    """Run T iterations of the learning loop and evaluate against baselines.

    When ``output_dir`` (or ``config.output_dir``) is set, writes
    ``config.json``, ``steps.jsonl``, ``curve.csv``, ``result.json``,
    ``beam.json``, ``geometry.json`` and ``checkpoint.json``.
    """
    output_dir = output_dir if output_dir is not None else config.output_dir
    sc = build_scenario(config)
    cfg = config.agent
    out = None
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        config.save(out / "config.json")
        save_geometry(sc.geometry, out / "geometry.json")

    t0 = time.perf_counter()
    agent = DDPGAgent(config.array.num_antennas, sc.codebook, cfg, seed=config.seeds.agent)
    env = BeamEnvironment(sc.channels, cfg.measurement_noise_std,
                          rng=np.random.SeedSequence(config.seeds.agent).spawn(5)[4])
    T = cfg.iterations
    gains = np.empty(T)
    best = np.empty(T)
    steps = open(out / "steps.jsonl", "w") if out else None
    try:
        for i in range(T):
            try:
                rec = agent.step(env)
            except NonFiniteError as exc:
                if out:
                    _write_beam(out / "beam.json", agent.tracker.best_phases, sc.codebook)
                raise TrainingError(f"training aborted at iteration {agent.t}: {exc}") from exc
            gains[i] = rec.gain
            best[i] = rec.best_gain
            if steps:
                steps.write(json.dumps(rec.to_dict()) + "\n")
            if progress is not None:
                progress(rec)
    finally:
        if steps:
            steps.close()
    duration = time.perf_counter() - t0

    bound = egc_bound(sc.channels)
    table = run_baselines(config, sc) if baselines else {}
    result = RunResult(np.arange(1, T + 1), gains, best, agent.tracker.best_phases.copy(),
                       table, bound, milestone_iterations(best, bound), duration)
    if out:
        _write_curve(out / "curve.csv", out / "steps.jsonl", config.curve_every)
        _write_beam(out / "beam.json", result.best_phases, sc.codebook)
        (out / "result.json").write_text(json.dumps(result.to_dict(), indent=2) + "\n")
        save_checkpoint(out / "checkpoint.json",
                        {"actor": (agent.actor, agent.actor_opt),
                         "critic": (agent.critic, agent.critic_opt)},
                        extra={"step": agent.t, "tracker": agent.tracker.state_dict()})
    log.info("run finished: best %.4g (%.3f of EGC) in %.1fs",
             result.final_best_gain, result.final_ratio, duration)
    return result


CURVE_COLUMNS = ("t", "gain", "best_gain", "reward", "beta")


def _write_curve(path, steps_path, every):
    with open(steps_path) as src, open(path, "w", newline="") as dst:
        w = csv.writer(dst)
        w.writerow(CURVE_COLUMNS)
        last = None
        for line in src:
            rec = json.loads(line)
            last = rec
            if rec["t"] % every == 0 or rec["t"] == 1:
                w.writerow([rec[c] for c in CURVE_COLUMNS])
        if last is not None and last["t"] % every != 0 and last["t"] != 1:
            w.writerow([last[c] for c in CURVE_COLUMNS])


def read_curve(path) -> Dict[str, np.ndarray]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {c: np.array([float(r[c]) for r in rows]) for c in CURVE_COLUMNS}


def read_steps(path) -> List[StepLog]:
    with open(path) as f:
        return [StepLog(**json.loads(line)) for line in f if line.strip()]


def _write_beam(path, phases, codebook: PhaseCodebook):
    doc = {"phases_rad": None if phases is None else np.asarray(phases).tolist(),
           "codebook": codebook.name, "resolution_bits": codebook.resolution_bits}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def write_beam(path, phases, codebook: PhaseCodebook):
    phases = np.asarray(phases, dtype=float)
    if not is_quantized(phases, codebook):
        log.warning("beam written to %s is not on the %s codebook", path, codebook.name)
    _write_beam(path, phases, codebook)


def read_beam(path):
    """Return (phases, resolution_bits) from a beam.json file."""
    try:
        doc = json.loads(Path(path).read_text())
        return np.array(doc["phases_rad"], dtype=float), doc.get("resolution_bits")
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read beam file {path}: {exc}") from None


def write_pattern(path, rows: List[dict]):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def read_pattern(path) -> Dict[str, np.ndarray]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def run_sweep(config: ExperimentConfig, agent_seeds, output_dir=None) -> List[RunResult]:
    """Independent runs that differ only in the agent seed."""
    results = []
    for s in agent_seeds:
        cfg = config.with_overrides({"seeds.agent": int(s)})
        sub = None if output_dir is None else Path(output_dir) / f"seed_{s}"
        results.append(run_training(cfg, sub))
    if output_dir is not None:
        summary = [{"agent_seed": int(s), "final_ratio_to_egc": r.final_ratio,
                    "milestones": r.milestones} for s, r in zip(agent_seeds, results)]
        Path(output_dir, "sweep.json").write_text(json.dumps(summary, indent=2) + "\n")
    return results
