#!/usr/bin/env python3
"""Residual-scaling ablation at small scale.

Builds a small dataset, then drives `ridgenet ablate-scaling` so the three
scaling settings (proposed alpha=24, all-positive alpha=61, all-positive
alpha=85) train on identical data and seed. A few minutes on one core.
"""

import argparse
import sys
from pathlib import Path

from ridgenet import synth as S
from ridgenet.cli import main as cli_main

NOISE = S.NoiseParams(kernel_sizes=(9, 11), appearance_prob=0.2,
                      darkness=-2.5, kernel_stddev=3.0,
                      darkness_range=(-0.1, 0.1))


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="ablation_run")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--channels", type=int, default=8)
    ap.add_argument("--steps", type=int, default=10)
    args = ap.parse_args()

    root = Path(args.out)
    data = root / "data"
    if not (data / "manifest.json").exists():
        S.write_dataset(data, 16, 0, 4, NOISE, base_seed=17,
                        height=36, width=88)
    cfg = root / "ablation.cfg"
    cfg.write_text("variant = block84_multitask\n"
                   f"channels = {args.channels}\n"
                   "epochs = 1\nbatch_size = 4\nphase1_steps = 2\n"
                   f"max_steps = {args.steps}\nseed = {args.seed}\n")
    return cli_main(["ablate-scaling", "--config", str(cfg),
                     "--manifest", str(data), "--out", str(root / "out")])


if __name__ == "__main__":
    sys.exit(main())
