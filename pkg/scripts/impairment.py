"""Learn a beam on an impaired array and compare it with the classical steering codebook.

Writes the run outputs plus two beam patterns evaluated on the impaired
geometry: the learned beam and the best ideal-geometry steering beam.

    python scripts/impairment.py --seed 0 --out runs/impaired
"""

import argparse
from pathlib import Path

import numpy as np

from beamrl.channel import ArrayGeometry
from beamrl.harness import ExperimentConfig, build_scenario, run_training, sample_beam_pattern, write_pattern
from beamrl.metrics import beamsteering_codebook, best_codebook_beam


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma-d", type=float, default=0.1, help="position std in wavelengths")
    p.add_argument("--sigma-p", type=float, default=0.32, help="phase offset std in units of pi")
    p.add_argument("--iterations", type=int, default=40_000)
    p.add_argument("--out", default="runs/impaired")
    args = p.parse_args()

    cfg = ExperimentConfig().with_overrides({
        "array.geometry": "impaired", "array.sigma_d": args.sigma_d, "array.sigma_p": args.sigma_p * np.pi,
        "seeds.geometry": args.seed, "seeds.channel": args.seed, "seeds.agent": args.seed,
        "agent.iterations": args.iterations,
    })
    out = Path(args.out)
    res = run_training(cfg, out)
    sc = build_scenario(cfg)
    book = beamsteering_codebook(ArrayGeometry.ideal(cfg.array.num_antennas), cfg.steering_beams, sc.codebook)
    i, steer_gain = best_codebook_beam(book, sc.channels)
    write_pattern(out / "pattern_learned.csv", sample_beam_pattern(res.best_phases, sc.geometry))
    write_pattern(out / "pattern_steering.csv", sample_beam_pattern(book[i], sc.geometry))
    print(f"learned beam: {res.final_ratio:.3f} x EGC, {10 * np.log10(res.final_best_gain):.2f} dB")
    print(f"best steering beam #{i}: {steer_gain / res.egc_gain:.3f} x EGC, {10 * np.log10(steer_gain):.2f} dB")
    print(f"margin {10 * np.log10(res.final_best_gain / steer_gain):.2f} dB; milestones {res.milestones}")


if __name__ == "__main__":
    main()
