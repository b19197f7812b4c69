"""Learned scalar gain vs the optimal Kalman filter on a 1-D linear-Gaussian process."""
import argparse
import json

from gkftrack.experiments import ToyConfig, toy_convergence


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--epochs", type=int, default=ToyConfig.epochs)
    p.add_argument("--n-train", type=int, default=ToyConfig.n_train)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="JSON result path")
    args = p.parse_args()
    r = toy_convergence(ToyConfig(epochs=args.epochs, n_train=args.n_train, seed=args.seed))
    print(f"KF MSE {r['kf_mse']:.4f}  GRU-KF MSE {r['gkf_mse']:.4f}  ratio {r['ratio']:.3f}  "
          f"({r['train_seconds']:.0f} s)")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(r, f, indent=2)


if __name__ == "__main__":
    main()
