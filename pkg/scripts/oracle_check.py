"""Compare learned beams with exhaustive search on arrays small enough to enumerate.

    python scripts/oracle_check.py --antennas 3 --bits 2 --runs 10
"""

import argparse
import time

from beamrl.harness import ExperimentConfig, build_scenario, run_training
from beamrl.metrics import exhaustive_search


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--antennas", type=int, default=3)
    p.add_argument("--bits", type=int, default=2)
    p.add_argument("--iterations", type=int, default=5000)
    p.add_argument("--runs", type=int, default=10)
    args = p.parse_args()

    hits = 0
    for seed in range(args.runs):
        cfg = ExperimentConfig().with_overrides({
            "array.num_antennas": args.antennas, "array.resolution_bits": args.bits,
            "agent.iterations": args.iterations, "seeds.channel": seed, "seeds.agent": seed,
        })
        t0 = time.perf_counter()
        res = run_training(cfg, None, baselines=False)
        sc = build_scenario(cfg)
        _, opt = exhaustive_search(sc.channels, args.antennas, sc.codebook)
        ratio = res.final_best_gain / opt
        hits += ratio >= 0.99
        print(f"seed {seed}: learned/optimum {ratio:.4f} ({time.perf_counter() - t0:.1f}s)", flush=True)
    print(f"{hits}/{args.runs} runs within 1% of the exhaustive optimum")


if __name__ == "__main__":
    main()
