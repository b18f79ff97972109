#!/usr/bin/env python3
"""Write the desk benchmark (10 classes, 8x8x1, 200/50 per class) as DPFD files."""
import argparse
from pathlib import Path

from dpformer.config import profile_config
from dpformer.harness.data import synthesize, write_dpfd

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out", type=Path)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    spec = profile_config("desk").data.synthetic_spec()
    train, test = synthesize(spec, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    write_dpfd(train, args.out / "train.dpfd")
    write_dpfd(test, args.out / "test.dpfd")
    print(f"{len(train)} train / {len(test)} test images -> {args.out}")
