"""Train on a single LOS-dominant user with a 32-element ideal array over several seeds.

Prints, per seed, the final best gain relative to EGC, the first iteration
reaching 90% and 95% of EGC, and the best 32-beam steering codebook ratio.

    python scripts/milestone.py --seeds 0 1 2 3 4 --out runs/milestone
"""

import argparse
import json

from beamrl.harness import ExperimentConfig, run_sweep


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", help="base experiment config JSON")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--iterations", type=int)
    p.add_argument("--out", default="runs/milestone")
    args = p.parse_args()

    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.iterations:
        cfg = cfg.with_overrides({"agent.iterations": args.iterations})
    # vary the channel together with the agent seed
    rows = []
    for seed in args.seeds:
        res = run_sweep(cfg.with_overrides({"seeds.channel": seed}), [seed], f"{args.out}/channel_{seed}")[0]
        steer = res.baselines["steering_best"]["ratio_to_egc"]
        rows.append({"seed": seed, "best_ratio": round(res.final_ratio, 4), "steering_ratio": round(steer, 4),
                     "first_0.9": res.milestones["0.9"], "first_0.95": res.milestones["0.95"],
                     "seconds": round(res.duration_s, 1)})
        print(json.dumps(rows[-1]), flush=True)
    hits = sum(r["first_0.9"] is not None for r in rows)
    print(f"{hits}/{len(rows)} seeds reached 0.9 x EGC")


if __name__ == "__main__":
    main()
