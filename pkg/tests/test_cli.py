"""Command-line entry points, run end to end in-process on tiny configs."""

import json

import numpy as np
import pytest

from afh import init_params, load_config, make_toy_dataset, psnr, save_checkpoint
from afh.cli import main
from afh.image_ops import load_png, resize_bicubic, save_png


def config_dict(out_dir, **overrides):
    d = {
        "seed": 1,
        "output_dir": str(out_dir),
        "image": {"height": 48, "width": 48, "channels": 3},
        "patch": {"height": 24, "width": 18},
        "policy": {"encoder_width": 16, "lstm_hidden": 16},
        "enhancer": {"global_fc_width": 16, "conv_spec": [[4, 3], [3, 3]]},
        "episode": {"steps": 2, "mode": "sample"},
        "optimizer": {"learning_rate": 0.001, "batch_size": 2, "iterations": 2},
        "training": {"policy_mode": "learned"},
        "dataset": {"kind": "toy", "train": 3, "val": 2, "scale": 4, "seed": 7},
    }
    for key, value in overrides.items():
        if isinstance(value, dict):
            d[key] = {**d[key], **value}
        else:
            d[key] = value
    return d


def write_config(tmp_path, name="run.json", **overrides):
    path = tmp_path / name
    path.write_text(json.dumps(config_dict(tmp_path / "out", **overrides)))
    return path


def identity_checkpoint(tmp_path, cfg_path):
    cfg = load_config(cfg_path)
    params = init_params(cfg.policy, cfg.enhancer, seed=0)
    path = tmp_path / "identity.afh"
    save_checkpoint(params, None, path)
    return path


class TestTrain:
    def test_produces_log_checkpoint_and_manifest(self, tmp_path):
        cfg_path = write_config(tmp_path)
        assert main(["train", "--config", str(cfg_path)]) == 0
        out = tmp_path / "out"
        log = (out / "train_log.csv").read_text().strip().splitlines()
        assert log[0].startswith("iteration,")
        assert len(log) == 3
        assert (out / "checkpoint.afh").exists()
        assert (out / "config.json").exists()
        listed = (out / "manifest.txt").read_text().split()
        assert str(out / "checkpoint.afh") in listed

    def test_resume_continues_iteration_numbering(self, tmp_path):
        cfg_path = write_config(tmp_path)
        assert main(["train", "--config", str(cfg_path)]) == 0
        ckpt = tmp_path / "out" / "checkpoint.afh"
        cfg2 = write_config(
            tmp_path, name="resume.json", optimizer={"iterations": 4}
        )
        out2 = tmp_path / "out2"
        assert main([
            "train", "--config", str(cfg2),
            "--checkpoint", str(ckpt),
            "--output", str(out2),
        ]) == 0
        rows = (out2 / "train_log.csv").read_text().strip().splitlines()[1:]
        assert [r.split(",")[0] for r in rows] == ["3", "4"]

    def test_invalid_config_exits_nonzero_naming_field(self, tmp_path, capsys):
        cfg_path = write_config(
            tmp_path, optimizer={"learning_rate": -1.0}
        )
        assert main(["train", "--config", str(cfg_path)]) == 1
        assert "learning_rate" in capsys.readouterr().err

    def test_seed_override_changes_the_run(self, tmp_path):
        cfg_path = write_config(tmp_path)
        main(["train", "--config", str(cfg_path)])
        log_a = (tmp_path / "out" / "train_log.csv").read_text()
        out_b = tmp_path / "outb"
        main(["train", "--config", str(cfg_path), "--seed", "2",
              "--output", str(out_b)])
        log_b = (out_b / "train_log.csv").read_text()
        assert log_a != log_b


class TestEval:
    def test_identity_checkpoint_scores_the_bicubic_baseline(self, tmp_path):
        cfg_path = write_config(tmp_path)
        ckpt = identity_checkpoint(tmp_path, cfg_path)
        assert main([
            "eval", "--config", str(cfg_path), "--checkpoint", str(ckpt),
        ]) == 0
        rows = (tmp_path / "out" / "metrics.csv").read_text().strip().splitlines()
        assert rows[0] == "image_id,psnr,ssim,fsim"
        assert len(rows) == 4  # 2 validation images + mean
        assert rows[-1].split(",")[0] == "mean"
        val = make_toy_dataset(2, (48, 48), 4, seed=8)
        want = float(np.mean([psnr(p.lr_up, p.hr) for p in val]))
        assert float(rows[-1].split(",")[1]) == pytest.approx(want, abs=1e-5)

    def test_missing_checkpoint_fails_cleanly(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path)
        assert main(["eval", "--config", str(cfg_path)]) == 1
        assert "checkpoint" in capsys.readouterr().err


class TestHallucinate:
    def make_input(self, tmp_path, rng):
        img = rng.uniform(0.0, 1.0, size=(48, 48, 3)).astype(np.float32)
        path = tmp_path / "input.png"
        save_png(img, path)
        return path

    def test_identity_checkpoint_returns_the_input(self, tmp_path, rng):
        cfg_path = write_config(tmp_path)
        ckpt = identity_checkpoint(tmp_path, cfg_path)
        inp = self.make_input(tmp_path, rng)
        out_dir = tmp_path / "hall"
        assert main([
            "hallucinate", "--checkpoint", str(ckpt), "--input", str(inp),
            "--output", str(out_dir), "--steps", "2",
        ]) == 0
        out = load_png(out_dir / "hallucinated.png")
        np.testing.assert_array_equal(out, load_png(inp))

    def test_deterministic_and_dumps_trajectory(self, tmp_path, rng, capsys):
        cfg_path = write_config(tmp_path)
        ckpt = identity_checkpoint(tmp_path, cfg_path)
        inp = self.make_input(tmp_path, rng)
        for k in (1, 2):
            assert main([
                "hallucinate", "--checkpoint", str(ckpt), "--input", str(inp),
                "--output", str(tmp_path / f"h{k}"), "--steps", "3",
                "--dump-trajectory", "--time",
            ]) == 0
        a = (tmp_path / "h1" / "hallucinated.png").read_bytes()
        b = (tmp_path / "h2" / "hallucinated.png").read_bytes()
        assert a == b
        manifest = tmp_path / "h1" / "trajectory" / "manifest.csv"
        assert len(manifest.read_text().strip().splitlines()) == 4
        assert "episode time" in capsys.readouterr().out

    def test_small_input_is_upsampled_to_model_dims(self, tmp_path, rng):
        cfg_path = write_config(tmp_path)
        ckpt = identity_checkpoint(tmp_path, cfg_path)
        small = rng.uniform(0.0, 1.0, size=(12, 12, 3)).astype(np.float32)
        save_png(small, tmp_path / "small.png")
        out_dir = tmp_path / "hall"
        assert main([
            "hallucinate", "--checkpoint", str(ckpt),
            "--input", str(tmp_path / "small.png"),
            "--output", str(out_dir), "--steps", "1",
        ]) == 0
        out = load_png(out_dir / "hallucinated.png")
        assert out.shape == (48, 48, 3)
        want = resize_bicubic(load_png(tmp_path / "small.png"), 48, 48)
        np.testing.assert_array_equal(
            out, (np.rint(want * 255) / 255).astype(np.float32)
        )


class TestAblate:
    def test_random_patch_suite_writes_comparison(self, tmp_path):
        cfg_path = write_config(tmp_path)
        assert main([
            "ablate", "--config", str(cfg_path), "--suite", "random_patch",
        ]) == 0
        rows = (
            (tmp_path / "out" / "ablate_random_patch.csv")
            .read_text().strip().splitlines()
        )
        assert rows[0] == "variant,psnr,ssim,fsim"
        assert [r.split(",")[0] for r in rows[1:]] == ["learned", "random"]

    def test_tsweep_suite_uses_steps_list(self, tmp_path):
        cfg_path = write_config(tmp_path)
        assert main([
            "ablate", "--config", str(cfg_path), "--suite", "tsweep",
            "--steps-list", "1,2",
        ]) == 0
        rows = (
            (tmp_path / "out" / "ablate_tsweep.csv")
            .read_text().strip().splitlines()
        )
        assert [r.split(",")[0] for r in rows[1:]] == ["T1", "T2"]


class TestVisualize:
    def test_renders_dumped_trajectory(self, tmp_path, rng):
        cfg_path = write_config(tmp_path)
        ckpt = identity_checkpoint(tmp_path, cfg_path)
        img = rng.uniform(0.0, 1.0, size=(48, 48, 3)).astype(np.float32)
        save_png(img, tmp_path / "in.png")
        main([
            "hallucinate", "--checkpoint", str(ckpt),
            "--input", str(tmp_path / "in.png"),
            "--output", str(tmp_path / "h"), "--steps", "2",
            "--dump-trajectory",
        ])
        assert main([
            "visualize", "--trajectory", str(tmp_path / "h" / "trajectory"),
            "--output", str(tmp_path / "vis"),
        ]) == 0
        assert (tmp_path / "vis" / "trajectory.png").exists()

    def test_missing_trajectory_fails_cleanly(self, tmp_path, capsys):
        assert main([
            "visualize", "--trajectory", str(tmp_path / "nope"),
            "--output", str(tmp_path / "vis"),
        ]) == 1
        assert "manifest" in capsys.readouterr().err
