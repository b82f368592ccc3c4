#!/usr/bin/env python3
"""End-to-end demo through the CLI: synthesize, train a PBM model, evaluate, render.

    python scripts/demo.py --work demo_out --epochs 3
"""

import argparse
from pathlib import Path

from iimloc.harness.cli import main as cli


def run(*argv):
    print("$ iimloc", " ".join(argv))
    if cli(list(argv)) != 0:
        raise SystemExit(1)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--work", default="demo_out")
    p.add_argument("--epochs", type=int, default=3)
    args = p.parse_args()
    work = Path(args.work)
    data, model = work / "data", work / "pbm.npz"
    run("synth", "--out", str(data), "--train", "40", "--val", "10", "--test", "10", "--seed", "0")
    run("train", "--data", str(data), "--out", str(model), "--mode", "pbm", "--routing", "te+cp",
        "--epochs", str(args.epochs), "--log", str(work / "train_log.jsonl"))
    run("eval", "--data", str(data), "--model", str(model), "--records", str(work / "test_records.txt"),
        "--out", str(work / "metrics.json"))
    run("render", "--image", str(data / "test" / "images" / "test_0000.png"),
        "--annotation", str(data / "test" / "annotations" / "test_0000.json"),
        "--model", str(model), "--out", str(work / "overlay_test_0000.png"))


if __name__ == "__main__":
    main()
