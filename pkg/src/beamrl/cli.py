"""Command line entry point: ``beamrl <subcommand>`` (or ``python -m beamrl``)."""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .array_core import ConfigError
from .channel import GenerationError, IngestionError, save_channels, save_geometry
from .harness import (
    ExperimentConfig,
    TrainingError,
    build_geometry,
    build_scenario,
    evaluate_beam,
    read_beam,
    run_baselines,
    run_sweep,
    run_training,
    sample_beam_pattern,
    write_pattern,
)
from .metrics import UsageError
from .channel import load_geometry
from .neural import NonFiniteError

log = logging.getLogger("beamrl")


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _config_args(p):
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                   help="log progress")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field, e.g. agent.gamma=0.5 (repeatable)")
    p.add_argument("--antennas", type=int, help="number of antennas M")
    p.add_argument("--bits", type=int, help="phase shifter resolution r")
    p.add_argument("--iterations", type=int, help="training iterations T")
    p.add_argument("--impaired", action="store_true", help="use an impaired array geometry")
    p.add_argument("--geometry-file", help="load the array geometry from JSON")
    p.add_argument("--channel-file", help="load channels from CSV instead of synthesizing")
    p.add_argument("--aoa-deg", type=float, help="center angle of arrival (degrees) of the first path")
    p.add_argument("--seed", type=int, help="agent seed")
    p.add_argument("--channel-seed", type=int)
    p.add_argument("--geometry-seed", type=int)


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = _parse_value(value)
    shortcuts = {
        "array.num_antennas": args.antennas,
        "array.resolution_bits": args.bits,
        "agent.iterations": args.iterations,
        "array.geometry_file": args.geometry_file,
        "channel_file": args.channel_file,
        "channel.aoa_center_deg": args.aoa_deg,
        "seeds.agent": args.seed,
        "seeds.channel": args.channel_seed,
        "seeds.geometry": args.geometry_seed,
    }
    overrides.update({k: v for k, v in shortcuts.items() if v is not None})
    if args.impaired:
        overrides["array.geometry"] = "impaired"
    return cfg.with_overrides(overrides).validate()


def _dump(obj, out=None):
    text = json.dumps(obj, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def cmd_gen_channels(args):
    cfg = load_config(args)
    sc = build_scenario(cfg)
    save_channels(sc.channels, args.out, comment=f"{sc.channels.num_users} users, "
                  f"{sc.channels.num_antennas} antennas, re/im interleaved")
    if args.geometry_out:
        save_geometry(sc.geometry, args.geometry_out)
    print(f"wrote {sc.channels.num_users} channel(s) to {args.out}")


def cmd_gen_geometry(args):
    cfg = load_config(args)
    geometry = build_geometry(cfg)
    save_geometry(geometry, args.out)
    print(f"wrote {geometry.num_antennas}-element geometry to {args.out}")


def cmd_train(args):
    cfg = load_config(args)
    every = max(1, cfg.agent.iterations // 20)

    def progress(rec):
        if rec.t % every == 0:
            log.info("t=%d gain=%.4g best=%.4g sigma=%.3g", rec.t, rec.gain, rec.best_gain, rec.sigma)

    result = run_training(cfg, args.out, progress=progress)
    summary = result.to_dict()
    summary.pop("best_phases")
    summary["baselines"] = {name: {k: v for k, v in row.items() if k != "phases"}
                            for name, row in summary["baselines"].items()}
    _dump(summary)


def cmd_baselines(args):
    cfg = load_config(args)
    table = run_baselines(cfg)
    if args.out:
        Path(args.out).write_text(json.dumps(table, indent=2) + "\n")
    print(f"{'baseline':<16}{'gain':>12}{'gain_dB':>10}{'/EGC':>8}")
    for name, row in table.items():
        print(f"{name:<16}{row['gain']:>12.4f}{row['gain_db']:>10.2f}{row['ratio_to_egc']:>8.3f}")


def cmd_eval_beam(args):
    cfg = load_config(args)
    phases, _ = read_beam(args.beam)
    sc = build_scenario(cfg)
    _dump(evaluate_beam(phases, sc.channels, rho=args.rho).to_dict(), args.out)


def cmd_beam_pattern(args):
    phases, _ = read_beam(args.beam)
    if args.geometry:
        geometry = load_geometry(args.geometry)
    else:
        geometry = build_geometry(load_config(args))
    grid = np.arange(args.step_deg, 180.0, args.step_deg)
    rows = sample_beam_pattern(phases, geometry, grid)
    write_pattern(args.out, rows)
    print(f"wrote {len(rows)} pattern samples to {args.out}")


def cmd_sweep(args):
    cfg = load_config(args)
    results = run_sweep(cfg, args.seeds, args.out)
    _dump([{"agent_seed": s, "final_ratio_to_egc": r.final_ratio, "milestones": r.milestones}
           for s, r in zip(args.seeds, results)])


def build_parser():
    parser = argparse.ArgumentParser(prog="beamrl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-channels", help="synthesize channels and save them as CSV")
    _config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--geometry-out")
    p.set_defaults(func=cmd_gen_channels)

    p = sub.add_parser("gen-geometry", help="draw an array geometry and save it as JSON")
    _config_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_geometry)

    p = sub.add_parser("train", help="run the learning loop")
    _config_args(p)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("baselines", help="EGC, quantized EGC, steering codebook, exhaustive search")
    _config_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_baselines)

    p = sub.add_parser("eval-beam", help="evaluate a beam.json on the configured channels")
    _config_args(p)
    p.add_argument("--beam", required=True)
    p.add_argument("--rho", type=float, help="transmit SNR P_x/sigma_n^2 for SNR reporting")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_beam)

    p = sub.add_parser("beam-pattern", help="sample |w^H a(phi)|^2 over angle")
    _config_args(p)
    p.add_argument("--beam", required=True)
    p.add_argument("--geometry", help="geometry.json (default: from config)")
    p.add_argument("--step-deg", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_beam_pattern)

    p = sub.add_parser("sweep", help="train with several agent seeds")
    _config_args(p)
    p.add_argument("--seeds", type=int, nargs="+", required=True)
    p.add_argument("--out", help="output directory (one subdirectory per seed)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, UsageError, IngestionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GenerationError, TrainingError, NonFiniteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
