"""Sample-based AD-PGPD on the stochastic Burgers control task."""
import argparse

import numpy as np

from dpgpd.harness import build_instance, preset, run_experiment
from dpgpd.rollout import RolloutConfig, RolloutEstimator


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--T", type=int, default=2000)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--eval-rollouts", type=int, default=2000)
    p.add_argument("--out", default="runs/burgers")
    args = p.parse_args()
    cfg = preset("burgers").replace(T=args.T, seeds=tuple(range(args.seeds)), output_dir=args.out)
    res = run_experiment(cfg)
    vals = []
    for seed, rec in sorted(res.records.items()):
        inst = build_instance(cfg, rng=np.random.default_rng(10_000 + seed))
        est = RolloutEstimator(inst, RolloutConfig(inst.gamma), np.random.default_rng(20_000 + seed))
        vals.append(est.v(rec.final_policy, args.eval_rollouts, streams=("r", "g")).mean(axis=0))
    vals = np.array(vals)
    lam = np.mean([rec.final_lambda for rec in res.records.values()])
    print(f"last iterate V_r={vals[:, 0].mean():.2f}  V_g={vals[:, 1].mean():.2f}  lambda={lam:.4f}  "
          f"failed={len(res.failures)}")


if __name__ == "__main__":
    main()
