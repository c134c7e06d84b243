#!/usr/bin/env python3
"""End-to-end synthetic benchmark.

Generates the default synthetic dataset, trains the two-member ensemble on
the train split, evaluates it against the NCC baseline on the held-out
patients, and runs the dual-view candidate-filtering pipeline.  Prints a
compact comparison table and leaves all artifacts under --workdir.

This is the scripted equivalent of:

    dualview synth    --out <w>/data --seed 42
    dualview train    --data <w>/data --out <w>/run --seed 42 --lr 3e-3 \
                      --batch-size 256 --epochs 8
    dualview eval     --data <w>/data --out <w>/eval --seed 42 --checkpoints ...
    dualview ncc      --data <w>/data --out <w>/ncc  --seed 42
    dualview pipeline --data <w>/data --out <w>/pipeline --seed 42 \
                      --scorer ensemble --checkpoints ...
"""

import argparse
import json
import sys
import time
from pathlib import Path

from dualview.cli import main as dualview_main


def run(*argv):
    code = dualview_main([str(a) for a in argv])
    if code != 0:
        sys.exit(code)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", default="benchmark-run")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--pairs", type=int, default=200)
    parser.add_argument("--epochs", type=int, default=8)
    parser.add_argument("--lr", type=float, default=3e-3)
    parser.add_argument("--batch-size", type=int, default=256)
    args = parser.parse_args()

    work = Path(args.workdir)
    data, train_dir = work / "data", work / "run"
    eval_dir, ncc_dir, pipe_dir = work / "eval", work / "ncc", work / "pipeline"

    t0 = time.perf_counter()
    run("synth", "--out", data, "--seed", args.seed, "--pairs", args.pairs)
    run(
        "train", "--data", data, "--out", train_dir, "--seed", args.seed,
        "--arch", "desk", "--lr", args.lr, "--batch-size", args.batch_size,
        "--epochs", args.epochs,
    )
    checkpoints = sorted(train_dir.glob("member_*.ckpt"))
    run("eval", "--data", data, "--out", eval_dir, "--seed", args.seed,
        "--checkpoints", *checkpoints)
    run("ncc", "--data", data, "--out", ncc_dir, "--seed", args.seed)
    run("pipeline", "--data", data, "--out", pipe_dir, "--seed", args.seed,
        "--scorer", "ensemble", "--checkpoints", *checkpoints)
    elapsed = time.perf_counter() - t0

    ens = json.loads((eval_dir / "summary.json").read_text())
    ncc = json.loads((ncc_dir / "summary.json").read_text())
    pipe = json.loads((pipe_dir / "summary.json").read_text())
    fp = pipe["fp_report"]
    print()
    print(f"{'metric':38s} {'value':>10s}")
    print("-" * 50)
    print(f"{'ensemble AUC (held-out pairs)':38s} {ens['auc']:10.4f}")
    print(f"{'NCC baseline AUC (held-out pairs)':38s} {ncc['auc']:10.4f}")
    print(f"{'pipeline AUC, standalones included':38s} {pipe['auc_include']:10.4f}")
    print(f"{'pipeline AUC, standalones excluded':38s} {pipe['auc_exclude']:10.4f}")
    print(f"{'false detections removed':38s} {fp['removed_false']:6d}/{fp['total_false']:<4d}")
    print(f"{'sensitivity at that threshold':38s} {fp['sensitivity']:10.4f}")
    print(f"{'total wall time':38s} {elapsed:9.0f}s")


if __name__ == "__main__":
    main()
