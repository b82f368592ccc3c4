#!/usr/bin/env python3
"""Run the fixed / IBM / PBM threshold ablation and write a JSON summary.

    python scripts/run_ablation.py --seeds 0 1 2 --epochs 12 --out ablation.json
"""

import argparse
import json
import logging
from dataclasses import replace

from iimloc.harness.ablation import AblationConfig, run_ablation


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr-threshold", type=float)
    p.add_argument("--l1-weight", type=float)
    p.add_argument("--train", type=int, default=200)
    p.add_argument("--negative-fraction", type=float)
    p.add_argument("--out", default="ablation.json")
    args = p.parse_args()
    logging.basicConfig(level=logging.WARNING, format="%(asctime)s %(message)s")
    logging.getLogger("iimloc.harness.ablation").setLevel(logging.INFO)

    config = AblationConfig(seeds=tuple(args.seeds), n_train=args.train)
    if args.negative_fraction is not None:
        config = replace(config, scenes=replace(config.scenes, negative_fraction=args.negative_fraction))
    overrides = {k: v for k, v in (("epochs", args.epochs), ("lr_threshold", args.lr_threshold),
                                   ("l1_weight", args.l1_weight)) if v is not None}
    config = replace(config, train=replace(config.train, **overrides))
    result = run_ablation(config)
    with open(args.out, "w") as f:
        json.dump(result, f, indent=2)
    s = result["summary"]
    for name, m in s["mean"].items():
        print(f"{name:10s} F1 {100 * m['F1m']:6.2f}  Pre {100 * m['Pre']:6.2f}  "
              f"Rec {100 * m['Rec']:6.2f}  MAE {m['MAE']:6.2f}  negMAE {m['neg_MAE']:5.2f}")
    print({k: round(v, 3) for k, v in s.items() if k != "mean"}, f"{result['seconds']:.0f}s")


if __name__ == "__main__":
    main()
