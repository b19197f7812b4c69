"""AMOTA of EKF and GRU-KF trackers under CTRA and Bicycle backbone models."""
import argparse
import json

from gkftrack.experiments import SwapConfig, backbone_swap


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--epochs", type=int, default=SwapConfig.epochs)
    p.add_argument("--eval-seeds", type=int, nargs="+", default=list(SwapConfig.eval_seeds))
    p.add_argument("--out")
    args = p.parse_args()
    r = backbone_swap(SwapConfig(epochs=args.epochs, eval_seeds=tuple(args.eval_seeds)))
    for kind in SwapConfig.backbones:
        print(f"{kind:8s} GRU-KF {r[kind]['gkf']:.4f}  EKF {r[kind]['ekf']:.4f}")
    print(f"spread   GRU-KF {r['gkf_spread']:.4f}  EKF {r['ekf_spread']:.4f}")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(r, f, indent=2)


if __name__ == "__main__":
    main()
