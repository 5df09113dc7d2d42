"""Differentiable loss terms and their weighted composites.

Mirrors the plain-numpy metrics in metrics.py but built on the autodiff
ops so gradients flow to the network parameters:

  single task loss = w_mse * MSE + w_lap * Laplacian + w_ssim * (1 - SSIM)
  total loss       = w_binary * single(binary) + w_main * single(main)

The Laplacian term is a sum (not mean) of squared filter-response
differences, normalized by batch size only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .metrics import (LAPLACIAN_KERNEL, SSIM_C1, SSIM_C2, SSIM_WINDOW_SIZE,
                      SSIM_WINDOW_STD, gaussian_kernel)
from .tensor import Tensor4


@dataclass(frozen=True)
class LossWeights:
    w_mse: float = 0.1
    w_lap: float = 0.2
    w_ssim: float = 0.7
    w_binary_task: float = 0.3
    w_main_task: float = 0.7


_LAP_W = Tensor4(LAPLACIAN_KERNEL.reshape(1, 1, 3, 3))
_SSIM_W = Tensor4(gaussian_kernel(SSIM_WINDOW_SIZE, SSIM_WINDOW_STD).reshape(
    1, 1, SSIM_WINDOW_SIZE, SSIM_WINDOW_SIZE))


def mse_loss(x: Tensor4, y: Tensor4) -> Tensor4:
    d = T.sub(x, y)
    return T.tmean(T.mul(d, d))


def laplacian_loss(x: Tensor4, y: Tensor4) -> Tensor4:
    T._check_same_shape(x, y, "laplacian_loss")
    batch = x.shape[0]
    d = T.sub(T.conv2d(x, _LAP_W), T.conv2d(y, _LAP_W))
    return T.mul_scalar(T.tsum(T.mul(d, d)), 1.0 / batch)


def ssim_value(x: Tensor4, y: Tensor4) -> Tensor4:
    """Differentiable windowed SSIM; matches metrics.ssim numerically."""
    T._check_same_shape(x, y, "ssim")
    if min(x.shape[2], x.shape[3]) < SSIM_WINDOW_SIZE:
        raise T.ShapeMismatchError(f"image {x.shape} smaller than SSIM window")
    mux = T.conv2d(x, _SSIM_W, padding="valid")
    muy = T.conv2d(y, _SSIM_W, padding="valid")
    exx = T.conv2d(T.mul(x, x), _SSIM_W, padding="valid")
    eyy = T.conv2d(T.mul(y, y), _SSIM_W, padding="valid")
    exy = T.conv2d(T.mul(x, y), _SSIM_W, padding="valid")
    mux2 = T.mul(mux, mux)
    muy2 = T.mul(muy, muy)
    muxy = T.mul(mux, muy)
    sx = T.sub(exx, mux2)
    sy = T.sub(eyy, muy2)
    sxy = T.sub(exy, muxy)
    num = T.mul(T.add_scalar(T.mul_scalar(muxy, 2.0), SSIM_C1),
                T.add_scalar(T.mul_scalar(sxy, 2.0), SSIM_C2))
    den = T.mul(T.add_scalar(T.add(mux2, muy2), SSIM_C1),
                T.add_scalar(T.add(sx, sy), SSIM_C2))
    return T.tmean(T.div(num, den))


def ssim_loss(x: Tensor4, y: Tensor4) -> Tensor4:
    return T.add_scalar(T.mul_scalar(ssim_value(x, y), -1.0), 1.0)


def single_task_loss(pred: Tensor4, gt: Tensor4,
                     weights: LossWeights = LossWeights()
                     ) -> tuple[Tensor4, dict[str, float]]:
    """Weighted sum of the three terms; also returns per-term telemetry."""
    m = mse_loss(pred, gt)
    l = laplacian_loss(pred, gt)
    s = ssim_loss(pred, gt)
    total = T.add(T.add(T.mul_scalar(m, weights.w_mse),
                        T.mul_scalar(l, weights.w_lap)),
                  T.mul_scalar(s, weights.w_ssim))
    terms = {"mse": m.item(), "lap": l.item(), "ssim": s.item()}
    return total, terms


def total_loss(binary_pred: Tensor4, binary_gt: Tensor4,
               main_pred: Tensor4, main_gt: Tensor4,
               weights: LossWeights = LossWeights()
               ) -> tuple[Tensor4, dict[str, float]]:
    b, b_terms = single_task_loss(binary_pred, binary_gt, weights)
    m, m_terms = single_task_loss(main_pred, main_gt, weights)
    total = T.add(T.mul_scalar(b, weights.w_binary_task),
                  T.mul_scalar(m, weights.w_main_task))
    terms = {"binary": b.item(), "main": m.item(),
             **{f"main_{k}": v for k, v in m_terms.items()},
             **{f"binary_{k}": v for k, v in b_terms.items()}}
    return total, terms
