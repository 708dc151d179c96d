"""Raw vs moving-average vs NW smoothing on the closed-curve benchmark."""

import argparse

import numpy as np

from leocarto.localization import TrajBenchConfig, trajectory_benchmark


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--bandwidth", type=float, default=TrajBenchConfig.bandwidth)
    ap.add_argument("--window", type=int, default=TrajBenchConfig.window)
    args = ap.parse_args()
    cfg = TrajBenchConfig(bandwidth=args.bandwidth, window=args.window)
    runs = [trajectory_benchmark(s, cfg) for s in range(args.seeds)]
    for k in ("rmse_raw", "rmse_ma", "rmse_nw"):
        v = np.array([r[k] for r in runs])
        print(f"{k:9s} median {np.median(v):.4f}  range [{v.min():.4f}, {v.max():.4f}]")
    n = sum(r["smooth_nw"] < r["smooth_ma"] for r in runs)
    print(f"NW smoother than MA on {n}/{len(runs)} seeds")


if __name__ == "__main__":
    main()
