"""End-to-end CLI coverage; every subcommand runs against real artifacts."""

import numpy as np
import pytest

from ridgenet import quantize as Q
from ridgenet.cli import main
from ridgenet.pgm import read_pgm, write_pgm


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Dataset + one tiny trained multitask checkpoint, built via the CLI."""
    ws = tmp_path_factory.mktemp("cli_ws")
    rc = main(["synth-data", "--out", str(ws / "data"),
               "--train", "8", "--val", "2", "--test", "2", "--seed", "5",
               "--height", "24", "--width", "40",
               "--kernel-sizes", "5", "7", "--darkness", "-0.5"])
    assert rc == 0
    cfg = ws / "train.cfg"
    cfg.write_text("variant = block84_multitask\nchannels = 8\n"
                   "epochs = 1\nbatch_size = 4\nphase1_steps = 1\nseed = 2\n")
    rc = main(["train", "--config", str(cfg), "--manifest", str(ws / "data"),
               "--out", str(ws / "run")])
    assert rc == 0
    return ws


def checkpoint(ws):
    return str(ws / "run" / "checkpoints" / "final")


class TestSynthData:
    def test_wrote_manifest(self, workspace):
        assert (workspace / "data" / "manifest.json").exists()

    def test_refuses_existing(self, workspace, capsys):
        rc = main(["synth-data", "--out", str(workspace / "data"),
                   "--train", "1", "--val", "0", "--test", "0"])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestTrain:
    def test_artifacts(self, workspace):
        assert (workspace / "run" / "trace.csv").exists()
        assert (workspace / "run" / "checkpoints" / "final" / "model.rnw").exists()
        assert (workspace / "run" / "checkpoints" / "phase1").is_dir()

    def test_bad_config_path(self, capsys):
        assert main(["train", "--config", "/nope.cfg", "--out", "/tmp/x"]) == 1
        assert "error:" in capsys.readouterr().err


class TestEval:
    def test_table_and_csv(self, workspace, tmp_path, capsys):
        rc = main(["eval", "--manifest", str(workspace / "data"),
                   "--split", "test", "--out", str(tmp_path / "ev"),
                   checkpoint(workspace)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "no_enhance" in out
        txt = (tmp_path / "ev" / "eval.txt").read_text()
        csv = (tmp_path / "ev" / "eval.csv").read_text()
        assert txt == out
        lines = csv.strip().splitlines()
        assert lines[0].startswith("model,mse,ssim,psnr")
        assert len(lines) == 3  # header + baseline + checkpoint
        base = lines[1].split(",")
        assert base[0] == "no_enhance"
        assert all(float(v) == float(v) for v in base[1:])  # parseable

    def test_baseline_only(self, workspace, capsys):
        rc = main(["eval", "--manifest", str(workspace / "data")])
        assert rc == 0
        assert "no_enhance" in capsys.readouterr().out


class TestDenoise:
    def test_roundtrip(self, workspace, tmp_path, rng):
        src = tmp_path / "in.pgm"
        write_pgm(src, rng.random((24, 40)))
        out = tmp_path / "out.pgm"
        bout = tmp_path / "bin.pgm"
        rc = main(["denoise", "--checkpoint", checkpoint(workspace),
                   "--in", str(src), "--out", str(out),
                   "--emit-binary", str(bout)])
        assert rc == 0
        img = read_pgm(out)
        assert img.shape == (24, 40)
        assert img.min() >= 0.0 and img.max() <= 1.0
        assert read_pgm(bout).shape == (24, 40)


class TestQuantizeCli:
    def test_weight_only(self, workspace, tmp_path, capsys):
        dst = tmp_path / "q.rnq"
        rc = main(["quantize", "--checkpoint", checkpoint(workspace),
                   "--out", str(dst)])
        assert rc == 0
        assert "compression:       4.00x" in capsys.readouterr().out
        qm = Q.read_quantized(dst)
        assert qm.spec.mode == "weight_only"

    def test_activation_mode_needs_manifest(self, workspace, tmp_path, capsys):
        rc = main(["quantize", "--checkpoint", checkpoint(workspace),
                   "--out", str(tmp_path / "q.rnq"),
                   "--mode", "weight_and_activations"])
        assert rc == 1
        assert "calibration" in capsys.readouterr().err

    def test_activation_mode(self, workspace, tmp_path):
        dst = tmp_path / "qa.rnq"
        rc = main(["quantize", "--checkpoint", checkpoint(workspace),
                   "--out", str(dst), "--mode", "weight_and_activations",
                   "--manifest", str(workspace / "data"),
                   "--calib-samples", "2"])
        assert rc == 0
        qm = Q.read_quantized(dst)
        assert qm.act_fractions and qm.calibration_samples == 2


class TestInspect:
    def test_report(self, workspace, capsys):
        rc = main(["inspect-model", "--checkpoint", checkpoint(workspace)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "variant:       block84_multitask" in out
        assert "blocks:        84" in out
        assert "shared.s01" in out and "main_head.w" in out
        # per-layer breakdown counts sum to the reported total
        total = int(out.split("parameters:")[1].split()[0])
        body = out.split("parameter ")[1]
        counts = [int(line.split()[-2]) for line in body.splitlines()[1:] if line.strip()]
        assert sum(counts) == total


class TestAblateScaling:
    @pytest.mark.slow
    def test_three_settings(self, workspace, tmp_path, capsys):
        cfg = tmp_path / "ab.cfg"
        cfg.write_text("variant = block84_multitask\nchannels = 8\n"
                       "epochs = 1\nbatch_size = 4\nphase1_steps = 1\nseed = 4\n")
        rc = main(["ablate-scaling", "--config", str(cfg),
                   "--manifest", str(workspace / "data"),
                   "--out", str(tmp_path / "ab")])
        assert rc == 0
        txt = (tmp_path / "ab" / "comparison.txt").read_text()
        for label in ("proposed_a24", "all_positive_a61", "all_positive_a85"):
            assert label in txt
            assert (tmp_path / "ab" / label / "trace.csv").exists()
        csv = (tmp_path / "ab" / "comparison.csv").read_text()
        assert csv.splitlines()[0] == "label,final_loss,auc"


def test_unknown_command_exits():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
