"""Trained GRU-KF vs a nominal-noise EKF on heavy-tailed CTRA detections."""
import argparse
import json

from gkftrack.experiments import MismatchConfig, mismatch_advantage


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--epochs", type=int, default=MismatchConfig.epochs)
    p.add_argument("--n-train", type=int, default=MismatchConfig.n_train)
    p.add_argument("--eval-seeds", type=int, nargs="+", default=list(MismatchConfig.eval_seeds))
    p.add_argument("--out")
    args = p.parse_args()
    r = mismatch_advantage(MismatchConfig(n_train=args.n_train, epochs=args.epochs, eval_seeds=tuple(args.eval_seeds)))
    for name in ("gkf", "ekf"):
        print(f"{name:4s} AMOTA {r[name]['amota']:.4f}  RMSE {r[name]['rmse']:.4f}")
    print(f"{r['steps']} optimizer steps, {r['train_seconds']:.0f} s")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(r, f, indent=2)


if __name__ == "__main__":
    main()
