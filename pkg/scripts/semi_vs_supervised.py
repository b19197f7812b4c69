"""Optimizer steps to a validation-AMOTA target, semi-supervised vs supervised.

Writes per-step validation curves as CSV (run, seed, step, val_amota) for
external plotting.
"""
import argparse
import csv
import json

import numpy as np

from gkftrack.experiments import SemiConfig, semi_vs_supervised


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, nargs="+", default=list(SemiConfig.seeds))
    p.add_argument("--max-steps", type=int, default=SemiConfig.max_steps)
    p.add_argument("--out", help="JSON summary path")
    p.add_argument("--curves", help="CSV curve path")
    args = p.parse_args()
    rows = semi_vs_supervised(SemiConfig(seeds=tuple(args.seeds), max_steps=args.max_steps))
    for r in rows:
        print(f"seed {r['seed']}: teacher {r['teacher_amota']:.3f} target {r['target']:.3f}  "
              f"supervised {r['supervised']}  semi {r['semi']}")
    print(f"mean steps: supervised {np.mean([r['supervised'] for r in rows]):.1f}  "
          f"semi {np.mean([r['semi'] for r in rows]):.1f}")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(rows, f, indent=2)
    if args.curves:
        with open(args.curves, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["run", "seed", "step", "val_amota"])
            for r in rows:
                for mode in ("supervised", "semi"):
                    for i, v in enumerate(r[mode + "_curve"], start=1):
                        w.writerow([mode, r["seed"], i, v])


if __name__ == "__main__":
    main()
