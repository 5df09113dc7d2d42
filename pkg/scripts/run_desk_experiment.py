#!/usr/bin/env python3
"""Desk-scale end-to-end experiment.

Synthesizes a 512/64/64 dataset, trains the multitask and single-task
block-84 variants at width 16 on an identical 64-step budget, and prints
test-split metrics against the no-enhance baseline. Roughly 20 minutes on
one CPU core; everything is deterministic for a fixed --seed.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from ridgenet import metrics as MM
from ridgenet import model as M
from ridgenet import synth as S
from ridgenet.config import TrainConfig
from ridgenet.tensor import Tensor4
from ridgenet.train import load_checkpoint_model, load_split, train

NOISE = S.NoiseParams(appearance_prob=0.2, darkness=-2.5,
                      kernel_stddev=3.0, darkness_range=(-0.1, 0.1))


def mean_metrics(pred, clean):
    r = [MM.metric_report(p[0], c[0]) for p, c in zip(pred, clean)]
    return (float(np.mean([x.psnr for x in r])),
            float(np.mean([x.ssim for x in r])))


def predict(graph, noisy, batch=8):
    out = []
    for lo in range(0, noisy.shape[0], batch):
        out.append(M.forward(graph, Tensor4(noisy[lo:lo + batch]),
                             inference=True).main.data)
    return np.concatenate(out)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="desk_run")
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--data-seed", type=int, default=7)
    ap.add_argument("--channels", type=int, default=16)
    ap.add_argument("--steps", type=int, default=64)
    ap.add_argument("--train-size", type=int, default=512)
    args = ap.parse_args()

    root = Path(args.out)
    data = root / "data"
    if not (data / "manifest.json").exists():
        print(f"synthesizing dataset under {data} ...")
        S.write_dataset(data, args.train_size, 64, 64, NOISE,
                        base_seed=args.data_seed, height=36, width=176)

    common = dict(manifest=str(data), channels=args.channels, epochs=1,
                  batch_size=4, learning_rate=1e-3, seed=args.seed)
    phase1 = max(1, args.steps // 8)
    runs = [
        ("multitask", TrainConfig(variant="block84_multitask",
                                  phase1_steps=phase1,
                                  max_steps=args.steps - phase1, **common)),
        ("singletask", TrainConfig(variant="block84_singletask",
                                   max_steps=args.steps, **common)),
    ]

    manifest, data_root = S.load_manifest(data)
    noisy, clean, _ = load_split(manifest, data_root, "test")
    base_psnr, base_ssim = mean_metrics(noisy, clean)
    print(f"{'model':<12} {'psnr':>8} {'ssim':>8} {'d_psnr':>8} {'d_ssim':>8}")
    print(f"{'no_enhance':<12} {base_psnr:>8.3f} {base_ssim:>8.4f} "
          f"{0.0:>8.3f} {0.0:>8.4f}")
    for name, cfg in runs:
        res = train(cfg, root / name)
        graph = load_checkpoint_model(res.checkpoint_dir)
        psnr, ssim = mean_metrics(predict(graph, noisy), clean)
        print(f"{name:<12} {psnr:>8.3f} {ssim:>8.4f} "
              f"{psnr - base_psnr:>8.3f} {ssim - base_ssim:>8.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
