"""Run the attention-corrector case study over a range of seeds.

    python scripts/case_study.py --seeds 0 5
"""

import argparse

import numpy as np

from leocarto import localization as loc


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", nargs=2, type=int, default=[0, 5], metavar=("START", "STOP"))
    ap.add_argument("--epochs", type=int, default=loc.CorrectorConfig.epochs)
    ap.add_argument("--lr", type=float, default=loc.CorrectorConfig.lr)
    args = ap.parse_args()
    imps = []
    for s in range(*args.seeds):
        r = loc.run_case_study(s, loc.ScenarioConfig(), loc.CorrectorConfig(seed=s, epochs=args.epochs, lr=args.lr))
        b, c, e = r.baseline, r.corrected, r.ekf
        print(f"seed {s}: mean {b.mean:5.2f} -> {c.mean:5.2f} (ekf {e.mean:5.2f})  "
              f"p90 {b.p90:5.2f} -> {c.p90:5.2f}  max {b.max:5.2f} -> {c.max:5.2f}  "
              f"attn nlos/los {r.attn_nlos:.3f}/{r.attn_los:.3f}")
        imps.append(r.improvement)
    print(f"mean improvement {np.mean(imps):.1%}, >= 20% on {sum(i >= 0.2 for i in imps)}/{len(imps)} seeds")


if __name__ == "__main__":
    main()
