"""Step-size sweep on the quadratic navigation task.

For each eta, reports how many iterations V_g needs to settle within 5% |b| of the
constraint boundary and the spread of V_g over the first and last 10% of the run.
"""
import argparse

import numpy as np

from dpgpd.harness import preset, run_experiment, sweep_configs
from dpgpd.records import head_tail_std


def settle(v_g, band):
    bad = np.flatnonzero(np.abs(v_g) > band)
    return 0 if bad.size == 0 else int(bad[-1] + 1)


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--etas", default="0.001,0.005,0.01,0.02")
    p.add_argument("--T", type=int, default=2000)
    p.add_argument("--out", default="runs/eta_sweep")
    args = p.parse_args()
    base = preset("nav-quadratic").replace(T=args.T, seeds=(0,), output_dir=args.out)
    band = 0.05 * abs(base.b)
    for cfg in sweep_configs(base, {"eta": [float(e) for e in args.etas.split(",")]}):
        rec = run_experiment(cfg).records[0]
        v_g = rec.column("v_g")
        head, tail = head_tail_std(v_g)
        print(f"eta={cfg.eta:<7g} settle={settle(v_g, band):5d}  std(V_g) first/last 10%: "
              f"{head:.3f} / {tail:.3f}  final lambda={rec.final_lambda:.4f}")


if __name__ == "__main__":
    main()
