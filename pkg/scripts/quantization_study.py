#!/usr/bin/env python3
"""Post-training quantization study on a trained checkpoint.

Reports test-split PSNR for the float model, weight-only 8-bit, and
weight+activation 8-bit, plus the payload compression ratio. Expects a
checkpoint and dataset produced by run_desk_experiment.py (or the CLI).
"""

import argparse
import sys

import numpy as np

from ridgenet import metrics as MM
from ridgenet import model as M
from ridgenet import quantize as Q
from ridgenet import synth as S
from ridgenet.tensor import Tensor4
from ridgenet.train import load_checkpoint_model, load_split


def mean_psnr(pred, clean):
    return float(np.mean([MM.psnr(p[0], c[0]) for p, c in zip(pred, clean)]))


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", required=True)
    ap.add_argument("--manifest", required=True)
    ap.add_argument("--bits", type=int, default=8)
    ap.add_argument("--calib-samples", type=int, default=32)
    ap.add_argument("--batch-size", type=int, default=8)
    args = ap.parse_args()

    graph = load_checkpoint_model(args.checkpoint)
    manifest, root = S.load_manifest(args.manifest)
    noisy, clean, _ = load_split(manifest, root, "test")
    calib, _, _ = load_split(manifest, root, "train")

    def predict(fwd):
        out = []
        for lo in range(0, noisy.shape[0], args.batch_size):
            out.append(fwd(noisy[lo:lo + args.batch_size]).main.data)
        return np.concatenate(out)

    float_psnr = mean_psnr(predict(
        lambda b: M.forward(graph, Tensor4(b), inference=True)), clean)

    wq = Q.quantize_model(graph, Q.QuantSpec(args.bits, "weight_only"))
    g_wq = wq.dequantized_graph()
    wq_psnr = mean_psnr(predict(
        lambda b: M.forward(g_wq, Tensor4(b), inference=True)), clean)

    waq = Q.quantize_model(graph, Q.QuantSpec(args.bits, "weight_and_activations"),
                           calib[:args.calib_samples])
    g_waq = waq.dequantized_graph()
    waq_psnr = mean_psnr(predict(
        lambda b: Q.quantized_forward(waq, b, g_waq)), clean)

    rep = Q.size_report(graph, Q.QuantSpec(args.bits, "weight_only"))
    print(f"{'mode':<24} {'psnr_db':>9} {'drop_db':>9}")
    print(f"{'float':<24} {float_psnr:>9.4f} {0.0:>9.4f}")
    print(f"{'weight_only':<24} {wq_psnr:>9.4f} {float_psnr - wq_psnr:>9.4f}")
    print(f"{'weight_and_activations':<24} {waq_psnr:>9.4f} "
          f"{float_psnr - waq_psnr:>9.4f}")
    print()
    print(rep.render_text(), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
