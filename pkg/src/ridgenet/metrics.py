"""Grayscale image operators and quality metrics.

Images are 2-D float arrays with values in [0,1]. These are the plain
numpy implementations used by the evaluation harness; the differentiable
loss-side counterparts live in losses.py and are tested against these.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

LAPLACIAN_KERNEL = np.array(
    [[-1.0, -1.0, -1.0],
     [-1.0, 8.0, -1.0],
     [-1.0, -1.0, -1.0]])

# SSIM defaults: standard constants for L=1, 7x7 Gaussian window. Small
# 176x36 strips motivate a window smaller than the usual 11x11.
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
SSIM_WINDOW_SIZE = 7
SSIM_WINDOW_STD = 1.5


@dataclass(frozen=True)
class MetricReport:
    mse: float
    ssim: float
    psnr: float  # dB, math.inf when mse == 0


def _check_pair(x: np.ndarray, y: np.ndarray) -> None:
    if x.ndim != 2 or y.ndim != 2:
        raise ValueError("images must be 2-D")
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")


def gaussian_kernel(size: int, stddev: float) -> np.ndarray:
    """Normalized 2-D Gaussian, peak at center, sums to 1."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    if stddev <= 0:
        raise ValueError(f"stddev must be positive, got {stddev}")
    r = size // 2
    d = np.arange(-r, r + 1, dtype=np.float64)
    g1 = np.exp(-(d ** 2) / (2.0 * stddev ** 2))
    k = np.outer(g1, g1)
    return k / k.sum()


def laplacian_filter(img: np.ndarray) -> np.ndarray:
    """Convolve with the fixed 3x3 Laplacian kernel, zero padding."""
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError(f"image must be at least 3x3, got {img.shape}")
    # kernel is symmetric, so correlate == convolve
    return ndimage.correlate(np.asarray(img, dtype=np.float64),
                             LAPLACIAN_KERNEL, mode="constant", cval=0.0)


def mse(x: np.ndarray, y: np.ndarray) -> float:
    _check_pair(x, y)
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return float(np.mean(d * d))


def psnr(x: np.ndarray, y: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for [0,1] images."""
    e = mse(x, y)
    if e == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / e)


def ssim(x: np.ndarray, y: np.ndarray,
         window_size: int = SSIM_WINDOW_SIZE,
         window_std: float = SSIM_WINDOW_STD,
         c1: float = SSIM_C1, c2: float = SSIM_C2) -> float:
    """Mean of local SSIM over all fully-interior Gaussian windows."""
    _check_pair(x, y)
    if window_size > min(x.shape):
        raise ValueError(f"window {window_size} larger than image {x.shape}")
    w = gaussian_kernel(window_size, window_std)
    xf = np.asarray(x, dtype=np.float64)
    yf = np.asarray(y, dtype=np.float64)

    def wfilt(img: np.ndarray) -> np.ndarray:
        win = sliding_window_view(img, (window_size, window_size))
        return np.einsum("hwij,ij->hw", win, w)

    mux = wfilt(xf)
    muy = wfilt(yf)
    exx = wfilt(xf * xf)
    eyy = wfilt(yf * yf)
    exy = wfilt(xf * yf)
    sx = exx - mux * mux
    sy = eyy - muy * muy
    sxy = exy - mux * muy
    num = (2.0 * mux * muy + c1) * (2.0 * sxy + c2)
    den = (mux * mux + muy * muy + c1) * (sx + sy + c2)
    return float(np.mean(num / den))


def metric_report(x: np.ndarray, y: np.ndarray) -> MetricReport:
    return MetricReport(mse=mse(x, y), ssim=ssim(x, y), psnr=psnr(x, y))
