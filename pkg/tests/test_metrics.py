"""Metric implementations vs brute-force oracles."""

import math

import numpy as np
import pytest

from ridgenet import metrics as M

from oracles import (gaussian_kernel_naive, laplacian_naive, mse_naive,
                     psnr_naive, ssim_naive)


def _random_pair(rng):
    h = int(rng.integers(16, 41))
    w = int(rng.integers(16, 25))
    return rng.random((h, w)), rng.random((h, w))


class TestGaussianKernel:
    @pytest.mark.parametrize("size,std", [(3, 0.8), (7, 1.5), (13, 1.0), (21, 4.0)])
    def test_matches_naive(self, size, std):
        np.testing.assert_allclose(M.gaussian_kernel(size, std),
                                   gaussian_kernel_naive(size, std),
                                   rtol=1e-12, atol=1e-15)

    def test_normalized_symmetric_peaked(self):
        k = M.gaussian_kernel(9, 2.0)
        assert k.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(k, k[::-1, ::-1])
        assert k[4, 4] == k.max()

    @pytest.mark.parametrize("size", [0, 2, 4])
    def test_rejects_even_or_nonpositive_size(self, size):
        with pytest.raises(ValueError):
            M.gaussian_kernel(size, 1.0)

    def test_rejects_bad_std(self):
        with pytest.raises(ValueError):
            M.gaussian_kernel(3, 0.0)


class TestLaplacian:
    def test_constant_image_interior_zero(self):
        img = np.full((10, 12), 0.37)
        out = M.laplacian_filter(img)
        np.testing.assert_allclose(out[1:-1, 1:-1], 0.0, atol=1e-12)

    def test_matches_naive(self, rng):
        img = rng.random((9, 11))
        np.testing.assert_allclose(M.laplacian_filter(img),
                                   laplacian_naive(img), rtol=1e-12, atol=1e-12)

    def test_rejects_tiny(self):
        with pytest.raises(ValueError):
            M.laplacian_filter(np.zeros((2, 5)))


class TestOracles100Pairs:
    """SSIM/MSE/PSNR vs brute force on 100 random pairs (criterion 4 core)."""

    def test_hundred_random_pairs(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            x, y = _random_pair(rng)
            assert abs(M.mse(x, y) - mse_naive(x, y)) < 1e-6
            assert abs(M.psnr(x, y) - psnr_naive(x, y)) < 1e-6
            assert abs(M.ssim(x, y) - ssim_naive(x, y)) < 1e-6


class TestPsnr:
    def test_golden_20db(self):
        # mse 0.01 -> exactly 20 dB
        x = np.zeros((10, 10))
        y = np.full((10, 10), 0.1)
        assert M.psnr(x, y) == pytest.approx(20.0, abs=1e-12)

    def test_identical_is_inf(self, rng):
        x = rng.random((8, 8))
        assert M.psnr(x, x) == math.inf


class TestSsim:
    def test_self_similarity_is_one(self, rng):
        x = rng.random((12, 20))
        assert M.ssim(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_range_and_symmetry(self, rng):
        x, y = rng.random((16, 16)), rng.random((16, 16))
        s = M.ssim(x, y)
        assert -1.0 <= s <= 1.0
        assert M.ssim(y, x) == pytest.approx(s, abs=1e-12)

    def test_window_larger_than_image(self):
        with pytest.raises(ValueError):
            M.ssim(np.zeros((5, 5)), np.zeros((5, 5)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            M.mse(np.zeros((4, 4)), np.zeros((4, 5)))


def test_metric_report_fields(rng):
    x, y = rng.random((10, 10)), rng.random((10, 10))
    r = M.metric_report(x, y)
    assert r.mse == M.mse(x, y)
    assert r.ssim == M.ssim(x, y)
    assert r.psnr == M.psnr(x, y)
