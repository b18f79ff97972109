#!/usr/bin/env python3
"""Desk-scale prompt and loss ablations over five seeds, with a summary table.

Each configuration x seed is a full 5-task run (about 2.5 minutes on one core).
Rows are appended to ``<out>/ablation.csv`` as they finish, so an interrupted
sweep can be resumed: completed (config, seed) pairs are skipped.
"""
import argparse
import csv
import time
from pathlib import Path

import numpy as np

from dpformer.config import load_config, profile_config
from dpformer.harness.experiment import ABLATION_FIELDS, run_ablation


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", type=Path, default=Path("runs/ablation"))
    p.add_argument("--config", type=Path, help="base config (defaults to the desk profile)")
    p.add_argument("--configs", nargs="+",
                   default=["both", "class_only", "task_only", "none", "no_kd", "no_aux", "msa"])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    args = p.parse_args()

    base = load_config(args.config, "desk") if args.config else profile_config("desk")
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "ablation.csv"
    done = set()
    if path.exists():
        with open(path, newline="") as fh:
            done = {(r["config"], int(r["seed"])) for r in csv.DictReader(fh)}
    else:
        path.write_text(",".join(ABLATION_FIELDS) + "\n")

    for name in args.configs:
        for seed in args.seeds:
            if (name, seed) in done:
                continue
            start = time.perf_counter()
            (row,) = run_ablation(base, [name], [seed])
            with open(path, "a", newline="") as fh:
                csv.DictWriter(fh, ABLATION_FIELDS, lineterminator="\n").writerow(row)
            print(f"{name:11s} seed {seed}  last {row['last_acc']:.4f}  avg {row['avg_acc']:.4f}  "
                  f"{time.perf_counter() - start:.0f}s", flush=True)

    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    print(f"\n{'config':11s} {'mean last':>9s} {'mean avg':>9s}  seeds")
    for name in args.configs:
        sel = [r for r in rows if r["config"] == name]
        if sel:
            last = np.mean([float(r["last_acc"]) for r in sel])
            avg = np.mean([float(r["avg_acc"]) for r in sel])
            print(f"{name:11s} {last:9.4f} {avg:9.4f}  {len(sel)}")


if __name__ == "__main__":
    main()
