"""Sample-based AD-PGPD against PGDual on navigation with absolute-value rewards.

The full preset runs 40,000 iterations; ``--T`` scales it down.  Last iterates are
evaluated with fresh rollouts.
"""
import argparse

import numpy as np

from dpgpd.harness import build_instance, preset, run_experiment
from dpgpd.records import head_tail_std
from dpgpd.rollout import RolloutConfig, RolloutEstimator


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--T", type=int, default=8000)
    p.add_argument("--N", type=int, default=200)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--variant", default="absolute", choices=("absolute", "zone"))
    p.add_argument("--eval-rollouts", type=int, default=2000)
    p.add_argument("--out", default="runs/nav_absolute")
    args = p.parse_args()
    base = preset(f"nav-{args.variant}").replace(T=args.T, N=args.N, seeds=tuple(range(args.seeds)),
                                                 output_dir=args.out)
    for driver in ("adpgpd_sample", "pgdual"):
        cfg = base.replace(driver=driver, experiment=f"{base.experiment}-{driver}")
        res = run_experiment(cfg)
        vals, tails = [], []
        for seed, rec in sorted(res.records.items()):
            inst = build_instance(cfg, rng=np.random.default_rng(10_000 + seed))
            est = RolloutEstimator(inst, RolloutConfig(inst.gamma), np.random.default_rng(20_000 + seed))
            vals.append(est.v(rec.final_policy, args.eval_rollouts, streams=("r", "g")).mean(axis=0))
            tails.append(head_tail_std(rec.column("v_g"))[1])
        vals = np.array(vals)
        print(f"{driver:14s} last iterate V_r={vals[:, 0].mean():9.2f}  V_g={vals[:, 1].mean():9.2f}  "
              f"last-10% std(V_g)={np.mean(tails):.2f}  failed={len(res.failures)}")


if __name__ == "__main__":
    main()
