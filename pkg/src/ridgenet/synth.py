"""Synthetic wet-fingerprint triplets: clean ridges, binary map, wet noise.

A procedural ridge generator stands in for sensor capture. The wet-noise
recipe stamps darkened Gaussian kernels onto ridge pixels: each ridge
pixel is independently selected with `appearance_prob`; a kernel size is
drawn uniformly from `kernel_sizes`; the normalized kernel is scaled by
darkness + uniform(darkness_range) and added into the image, clamped to
[0,1] at the end. Everything is a pure function of (seed, params, dims).
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .metrics import gaussian_kernel
from .pgm import write_pgm

DEFAULT_HEIGHT = 36
DEFAULT_WIDTH = 176


@dataclass(frozen=True)
class NoiseParams:
    kernel_sizes: tuple[int, ...] = (13, 15, 17, 19, 21)
    kernel_stddev: float = 1.0
    appearance_prob: float = 0.2
    darkness: float = -0.2
    darkness_range: tuple[float, float] = (-0.01, 0.01)

    def __post_init__(self):
        if not self.kernel_sizes:
            raise ValueError("kernel_sizes must be non-empty")
        for k in self.kernel_sizes:
            if k < 1 or k % 2 == 0:
                raise ValueError(f"kernel sizes must be odd, got {k}")
        if self.kernel_stddev <= 0:
            raise ValueError("kernel_stddev must be positive")
        if not 0.0 <= self.appearance_prob <= 1.0:
            raise ValueError("appearance_prob must lie in [0,1]")
        lo, hi = self.darkness_range
        if lo > hi:
            raise ValueError("darkness_range must be (lo, hi) with lo <= hi")


@dataclass
class SampleTriplet:
    noisy: np.ndarray
    clean: np.ndarray
    binary: np.ndarray  # values exactly 0.0 / 1.0; ridge = 1
    seed: int
    params: NoiseParams


def generate_clean(seed: int, height: int = DEFAULT_HEIGHT, width: int = DEFAULT_WIDTH,
                   period_range: tuple[float, float] = (6.0, 9.0)
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Smooth ridge/valley pattern plus its exact binary ground truth.

    A slowly varying orientation field (a few low-frequency sinusoidal
    angle components) steers a sinusoid along the ridge normal. Ridges are
    dark in the clean image; binary is 1 where the sinusoid is >= 0.
    """
    if height < 8 or width < 8:
        raise ValueError(f"degenerate dims {height}x{width}")
    if not (4.0 <= period_range[0] <= period_range[1] <= 12.0):
        raise ValueError(f"ridge period range must lie in [4,12], got {period_range}")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    scale = float(max(height, width))

    theta = rng.uniform(0.0, np.pi)
    n_components = int(rng.integers(2, 5))
    for _ in range(n_components):
        amp = rng.uniform(0.2, 0.6)
        fx = rng.uniform(-2.0, 2.0) / scale
        fy = rng.uniform(-2.0, 2.0) / scale
        phase = rng.uniform(0.0, 2.0 * np.pi)
        theta = theta + amp * np.sin(2.0 * np.pi * (fx * xx + fy * yy) + phase)

    period = rng.uniform(*period_range)
    phase0 = rng.uniform(0.0, 2.0 * np.pi)
    ridge_wave = np.sin((2.0 * np.pi / period) * (xx * np.cos(theta) + yy * np.sin(theta))
                        + phase0)
    binary = (ridge_wave >= 0.0).astype(np.float64)
    # ridge (wave >= 0) maps to dark values; tanh soft-clips into (0,1)
    clean = 0.5 - 0.45 * np.tanh(2.5 * ridge_wave)
    return clean, binary


def binarize(clean: np.ndarray, block: int = 15) -> np.ndarray:
    """Adaptive local-mean threshold; dark (ridge) pixels map to 1."""
    if block < 3 or block % 2 == 0:
        raise ValueError(f"block must be odd and >= 3, got {block}")
    if block > min(clean.shape):
        raise ValueError(f"block {block} larger than image {clean.shape}")
    local_mean = ndimage.uniform_filter(np.asarray(clean, dtype=np.float64),
                                        size=block, mode="nearest")
    return (clean < local_mean).astype(np.float64)


def stamp_centers(binary: np.ndarray, params: NoiseParams,
                  rng: np.random.Generator) -> np.ndarray:
    """Ridge pixels independently selected as stamp centers, row-major."""
    u = rng.random(binary.shape)
    return np.argwhere((binary == 1.0) & (u < params.appearance_prob))


def synthesize_wet(clean: np.ndarray, binary: np.ndarray, params: NoiseParams,
                   seed: int) -> np.ndarray:
    """Stamp darkened Gaussian kernels onto ridge pixels (see module doc)."""
    if clean.shape != binary.shape:
        raise ValueError(f"clean/binary shapes differ: {clean.shape} vs {binary.shape}")
    rng = np.random.default_rng(seed)
    h, w = clean.shape
    centers = stamp_centers(binary, params, rng)
    if centers.size == 0:
        return clean.copy()

    kernels = {k: gaussian_kernel(k, params.kernel_stddev) for k in params.kernel_sizes}
    lo, hi = params.darkness_range
    out = clean.copy()
    for y, x in centers:  # argwhere yields row-major order: deterministic
        size = params.kernel_sizes[rng.integers(len(params.kernel_sizes))]
        darkness_value = params.darkness + rng.uniform(lo, hi)
        r = size // 2
        y0, y1 = max(0, y - r), min(h, y + r + 1)
        x0, x1 = max(0, x - r), min(w, x + r + 1)
        ky0, kx0 = y0 - (y - r), x0 - (x - r)
        out[y0:y1, x0:x1] += darkness_value * kernels[size][ky0:ky0 + (y1 - y0),
                                                            kx0:kx0 + (x1 - x0)]
    np.clip(out, 0.0, 1.0, out=out)
    return out


def generate_triplet(clean_seed: int, noise_seed: int, params: NoiseParams,
                     height: int = DEFAULT_HEIGHT, width: int = DEFAULT_WIDTH) -> SampleTriplet:
    clean, binary = generate_clean(clean_seed, height, width)
    noisy = synthesize_wet(clean, binary, params, noise_seed)
    return SampleTriplet(noisy=noisy, clean=clean, binary=binary,
                         seed=clean_seed, params=params)


def _sample_seeds(base_seed: int, split: str, index: int) -> tuple[int, int]:
    """Derive disjoint (clean, noise) seeds per sample from one base seed."""
    split_id = {"train": 0, "val": 1, "test": 2}[split]
    ss = np.random.SeedSequence(base_seed, spawn_key=(split_id, index))
    a, b = ss.generate_state(2)
    return int(a), int(b)


def write_dataset(out_dir: str | os.PathLike, n_train: int, n_val: int, n_test: int,
                  params: NoiseParams, base_seed: int,
                  height: int = DEFAULT_HEIGHT, width: int = DEFAULT_WIDTH,
                  force: bool = False) -> dict:
    """Emit PGM triplets plus a JSON manifest; fully seeded and repeatable."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise FileExistsError(f"{out} exists and is not empty (use force)")
    out.mkdir(parents=True, exist_ok=True)

    manifest: dict = {
        "base_seed": base_seed,
        "height": height,
        "width": width,
        "params": asdict(params),
        "splits": {},
    }
    for split, n in (("train", n_train), ("val", n_val), ("test", n_test)):
        (out / split).mkdir(exist_ok=True)
        entries = []
        for i in range(n):
            cs, ns = _sample_seeds(base_seed, split, i)
            trip = generate_triplet(cs, ns, params, height, width)
            names = {}
            for kind, img in (("noisy", trip.noisy), ("clean", trip.clean),
                              ("binary", trip.binary)):
                rel = f"{split}/{i:05d}_{kind}.pgm"
                write_pgm(out / rel, img)
                names[kind] = rel
            entries.append({**names, "seed": cs, "noise_seed": ns})
        manifest["splits"][split] = entries

    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest


def load_manifest(path: str | os.PathLike) -> tuple[dict, Path]:
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    with open(p) as f:
        return json.load(f), p.parent
