"""Synthetic data: determinism, noise-recipe locality, dataset writer."""

import numpy as np
import pytest

from ridgenet import synth as S
from ridgenet.pgm import read_pgm, write_pgm


FAST = S.NoiseParams(kernel_sizes=(5, 7), appearance_prob=0.15,
                     darkness=-0.4, kernel_stddev=1.2)


class TestNoiseParams:
    def test_defaults_match_recipe(self):
        p = S.NoiseParams()
        assert p.kernel_sizes == (13, 15, 17, 19, 21)
        assert p.kernel_stddev == 1.0
        assert p.appearance_prob == 0.2
        assert p.darkness == -0.2
        assert p.darkness_range == (-0.01, 0.01)

    def test_validation(self):
        with pytest.raises(ValueError):
            S.NoiseParams(kernel_sizes=(4,))
        with pytest.raises(ValueError):
            S.NoiseParams(kernel_sizes=())
        with pytest.raises(ValueError):
            S.NoiseParams(appearance_prob=1.5)
        with pytest.raises(ValueError):
            S.NoiseParams(kernel_stddev=0.0)
        with pytest.raises(ValueError):
            S.NoiseParams(darkness_range=(0.1, -0.1))


class TestGenerateClean:
    def test_deterministic(self):
        a, ab = S.generate_clean(5)
        b, bb = S.generate_clean(5)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(ab, bb)

    def test_seed_changes_output(self):
        a, _ = S.generate_clean(5)
        b, _ = S.generate_clean(6)
        assert not np.array_equal(a, b)

    def test_range_and_binary_convention(self):
        clean, binary = S.generate_clean(1)
        assert clean.min() >= 0.0 and clean.max() <= 1.0
        assert set(np.unique(binary)) <= {0.0, 1.0}
        # ridges (binary==1) are darker than valleys
        assert clean[binary == 1.0].mean() < clean[binary == 0.0].mean()

    def test_ridge_fraction_reasonable(self):
        fracs = [S.generate_clean(s)[1].mean() for s in range(20)]
        assert 0.3 < np.mean(fracs) < 0.7

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            S.generate_clean(0, height=4, width=4)


class TestBinarize:
    def test_recovers_ridges_on_clean(self):
        clean, binary = S.generate_clean(3)
        est = S.binarize(clean)
        agreement = np.mean(est == binary)
        assert agreement > 0.9

    def test_validation(self):
        clean, _ = S.generate_clean(3)
        with pytest.raises(ValueError):
            S.binarize(clean, block=4)
        with pytest.raises(ValueError):
            S.binarize(clean, block=99)


class TestSynthesizeWet:
    def test_deterministic(self):
        clean, binary = S.generate_clean(9)
        a = S.synthesize_wet(clean, binary, FAST, 77)
        b = S.synthesize_wet(clean, binary, FAST, 77)
        np.testing.assert_array_equal(a, b)

    def test_noise_seed_independent_of_clean(self):
        clean, binary = S.generate_clean(9)
        a = S.synthesize_wet(clean, binary, FAST, 1)
        b = S.synthesize_wet(clean, binary, FAST, 2)
        assert not np.array_equal(a, b)

    def test_zero_probability_is_identity(self):
        clean, binary = S.generate_clean(4)
        p = S.NoiseParams(kernel_sizes=(5,), appearance_prob=0.0)
        out = S.synthesize_wet(clean, binary, p, 123)
        np.testing.assert_array_equal(out, clean)

    def test_output_clamped(self):
        clean, binary = S.generate_clean(8)
        hard = S.NoiseParams(kernel_sizes=(9,), appearance_prob=0.5,
                             darkness=-5.0, kernel_stddev=3.0)
        out = S.synthesize_wet(clean, binary, hard, 3)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_negative_darkness_darkens(self):
        clean, binary = S.generate_clean(8)
        out = S.synthesize_wet(clean, binary, FAST, 3)
        assert out.mean() < clean.mean()
        assert np.all(out <= clean + 1e-12)

    def test_locality_outside_halo(self):
        # noise on a single ridge pixel must stay inside the kernel footprint
        clean = np.full((30, 30), 0.8)
        binary = np.zeros((30, 30))
        binary[15, 15] = 1.0
        p = S.NoiseParams(kernel_sizes=(7,), appearance_prob=1.0, darkness=-0.5)
        out = S.synthesize_wet(clean, binary, p, 0)
        changed = np.argwhere(out != clean)
        assert changed.size > 0
        assert np.all(np.abs(changed - 15) <= 3)  # radius 3 for size 7

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            S.synthesize_wet(np.zeros((8, 8)), np.zeros((8, 9)), FAST, 0)


class TestSampleSeeds:
    def test_disjoint_across_splits_and_indices(self):
        seen = set()
        for split in ("train", "val", "test"):
            for i in range(50):
                seen.add(S._sample_seeds(0, split, i))
        assert len(seen) == 150

    def test_stable(self):
        assert S._sample_seeds(3, "train", 5) == S._sample_seeds(3, "train", 5)


class TestWriteDataset:
    def test_manifest_and_files(self, tmp_path):
        man = S.write_dataset(tmp_path / "d", 3, 1, 2, FAST, 5,
                              height=24, width=40)
        assert len(man["splits"]["train"]) == 3
        assert len(man["splits"]["val"]) == 1
        assert len(man["splits"]["test"]) == 2
        loaded, root = S.load_manifest(tmp_path / "d")
        assert loaded["base_seed"] == 5
        assert loaded["splits"] == man["splits"]
        assert tuple(loaded["params"]["kernel_sizes"]) == FAST.kernel_sizes
        e = loaded["splits"]["train"][0]
        for kind in ("noisy", "clean", "binary"):
            img = read_pgm(root / e[kind])
            assert img.shape == (24, 40)

    def test_repeatable_bytes(self, tmp_path):
        S.write_dataset(tmp_path / "a", 2, 0, 0, FAST, 9, height=24, width=40)
        S.write_dataset(tmp_path / "b", 2, 0, 0, FAST, 9, height=24, width=40)
        fa = (tmp_path / "a" / "train" / "00000_noisy.pgm").read_bytes()
        fb = (tmp_path / "b" / "train" / "00000_noisy.pgm").read_bytes()
        assert fa == fb

    def test_refuses_nonempty_dir(self, tmp_path):
        d = tmp_path / "d"
        S.write_dataset(d, 1, 0, 0, FAST, 1, height=24, width=40)
        with pytest.raises(FileExistsError):
            S.write_dataset(d, 1, 0, 0, FAST, 1, height=24, width=40)
        S.write_dataset(d, 1, 0, 0, FAST, 1, height=24, width=40, force=True)

    def test_binary_files_are_binary(self, tmp_path):
        S.write_dataset(tmp_path / "d", 1, 0, 0, FAST, 2, height=24, width=40)
        img = read_pgm(tmp_path / "d" / "train" / "00000_binary.pgm")
        assert set(np.unique(img)) <= {0.0, 1.0}


class TestPgm:
    def test_roundtrip_exact_on_levels(self, tmp_path, rng):
        img = rng.integers(0, 256, size=(12, 17)) / 255.0
        p = tmp_path / "x.pgm"
        write_pgm(p, img)
        np.testing.assert_array_equal(read_pgm(p), img)

    def test_write_rejects_out_of_range(self, tmp_path):
        with pytest.raises(ValueError):
            write_pgm(tmp_path / "x.pgm", np.full((4, 4), 1.5))

    def test_read_handles_comments(self, tmp_path):
        p = tmp_path / "c.pgm"
        p.write_bytes(b"P5\n# a comment\n2 2\n255\n" + bytes([0, 128, 255, 64]))
        img = read_pgm(p)
        assert img.shape == (2, 2)
        assert img[0, 1] == 128 / 255.0

    def test_read_rejects_non_p5(self, tmp_path):
        p = tmp_path / "bad.pgm"
        p.write_bytes(b"P2\n2 2\n255\n0 0 0 0")
        with pytest.raises(ValueError):
            read_pgm(p)

    def test_read_rejects_truncated(self, tmp_path):
        p = tmp_path / "t.pgm"
        p.write_bytes(b"P5\n4 4\n255\n" + bytes(3))
        with pytest.raises(ValueError):
            read_pgm(p)
