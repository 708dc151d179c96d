"""Attention reconstructor vs IDW and NW on the synthetic radio-map suite."""

import argparse

from leocarto.config import RadioMapParams
from leocarto.experiments import radiomap_seed


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=RadioMapParams.epochs)
    args = ap.parse_args()
    p = RadioMapParams(epochs=args.epochs)
    for s in range(args.seeds):
        m = radiomap_seed(s, p)[0]
        cells = "  ".join(
            f"{k}: rmse {m[k]['rmse']:.4f} maxae {m[k]['maxae']:.4f} r2 {m[k]['r2']:.3f}" for k in ("attention", "idw", "nw")
        )
        print(f"seed {s}  {cells}  loss x{m['loss_reduction']:.0f}")


if __name__ == "__main__":
    main()
