"""Execution-time comparison of the flat and 2 degree tilted start at (-3, 3) mm.

    python scripts/tilt_vs_flat.py runs/peg/train/checkpoint.npz [--runs 100]
"""

import argparse
import math

from stiffq import harness as H
from stiffq.agent import load_checkpoint
from stiffq.config import ExperimentConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("checkpoint", nargs="?", help="omit to use the omniscient selector")
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    for label, tilt in (("flat", None), ("tilt 2 deg", math.radians(2.0))):
        cfg = ExperimentConfig(seed=args.seed)
        cfg.world = {"initial_offset": (-0.003, 0.003)}
        cfg.timing.runs = args.runs
        cfg.timing.tilt = tilt
        net = None if args.checkpoint is None else load_checkpoint(args.checkpoint, cfg.build_catalog().fingerprint)[0]
        res = H.run_timing_histogram(cfg, net)
        search, insertion, total = (res.column(n) for n in ("search_time", "insertion_time", "duration"))
        if total.size:
            print(f"{label:11s} success {res.success_rate:.2f}  search {search.mean():.3f} s  "
                  f"insertion {insertion.mean():.3f} s  total {total.mean():.3f} s")
        else:
            print(f"{label:11s} success 0.00")


if __name__ == "__main__":
    main()
