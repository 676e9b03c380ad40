"""Train an agent and run every evaluation for one preset.

    python scripts/run_experiment.py scripts/configs/peg.toml
    python scripts/run_experiment.py scripts/configs/gear.toml --skip sweep-sampling

Outputs land in the config's ``out`` directory, one subdirectory per step.
"""

import argparse
import sys
import time
from pathlib import Path

from stiffq.cli import EXIT_OK, main
from stiffq.config import load_config

STEPS = ("eval-grid", "sweep-sampling", "timing-hist", "trace-actions")


def run(argv) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--checkpoint", help="skip training and evaluate this network")
    ap.add_argument("--skip", action="append", default=[], choices=STEPS)
    args = ap.parse_args(argv)

    out = Path(load_config(args.config).out)
    common = ["--config", args.config] + ([] if args.seed is None else ["--seed", str(args.seed)])
    checkpoint = args.checkpoint
    if checkpoint is None:
        t0 = time.perf_counter()
        code = main(["train", *common, "--out", str(out / "train"), "-v"])
        if code != EXIT_OK:
            return code
        print(f"training took {time.perf_counter() - t0:.0f} s")
        checkpoint = str(out / "train" / "checkpoint.npz")
    for step in STEPS:
        if step in args.skip:
            continue
        t0 = time.perf_counter()
        code = main([step, *common, "--checkpoint", checkpoint, "--out", str(out / step)])
        if code != EXIT_OK:
            return code
        print(f"{step} took {time.perf_counter() - t0:.0f} s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))
