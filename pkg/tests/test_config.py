"""Run configuration parsing, validation diagnostics, and round trips."""

import json

import pytest

from afh import ConfigError, load_config, save_config
from afh.config import (
    DirectoryDatasetConfig,
    RunConfig,
    ToyDatasetConfig,
    from_dict,
    override,
    to_dict,
)


def toy_dict(**overrides):
    d = {
        "seed": 3,
        "output_dir": "runs/toy",
        "image": {"height": 48, "width": 48, "channels": 3},
        "patch": {"height": 24, "width": 18},
        "policy": {"encoder_width": 64, "lstm_hidden": 128},
        "enhancer": {
            "global_fc_width": 64,
            "conv_spec": [[16, 3], [16, 5], [3, 5]],
        },
        "episode": {"steps": 6, "mode": "sample"},
        "optimizer": {"learning_rate": 0.002, "batch_size": 8,
                      "iterations": 50},
        "training": {"policy_mode": "learned", "eval_every": 10},
        "dataset": {"kind": "toy", "train": 20, "val": 5, "scale": 4,
                    "seed": 1},
    }
    d.update(overrides)
    return d


class TestFromDict:
    def test_full_toy_config(self):
        cfg = from_dict(toy_dict())
        assert cfg.policy.image_height == 48
        assert cfg.enhancer.conv_spec == ((16, 3), (16, 5), (3, 5))
        assert cfg.episode.steps == 6
        assert cfg.episode.geom.patch_height == 24
        assert cfg.optimizer.learning_rate == 0.002
        assert isinstance(cfg.dataset, ToyDatasetConfig)
        assert cfg.dataset.train == 20

    def test_defaults_fill_optional_sections(self):
        d = {
            "output_dir": "runs/x",
            "image": {"height": 64, "width": 64},
            "patch": {"height": 32, "width": 24},
            "dataset": {"kind": "toy", "train": 4, "val": 2, "scale": 4},
        }
        cfg = from_dict(d)
        assert cfg.policy.encoder_width == 256
        assert cfg.policy.lstm_hidden == 512
        assert cfg.optimizer.learning_rate == 0.0002
        assert cfg.optimizer.beta1 == 0.5
        assert cfg.episode.steps == 25
        assert cfg.policy_mode == "learned"

    def test_directory_dataset(self):
        d = toy_dict(
            dataset={
                "kind": "directory",
                "root": "/data/faces",
                "train_split": "splits/train.txt",
                "test_split": "splits/test.txt",
                "scale": 4,
            }
        )
        cfg = from_dict(d)
        assert isinstance(cfg.dataset, DirectoryDatasetConfig)
        assert cfg.dataset.root == "/data/faces"


class TestDiagnostics:
    def test_missing_field_names_dotted_path(self):
        d = toy_dict()
        del d["image"]["height"]
        with pytest.raises(ConfigError, match=r"image\.height"):
            from_dict(d)

    def test_wrong_type_names_dotted_path(self):
        d = toy_dict()
        d["optimizer"]["batch_size"] = "eight"
        with pytest.raises(ConfigError, match=r"optimizer\.batch_size"):
            from_dict(d)

    def test_bool_is_not_int(self):
        d = toy_dict()
        d["episode"]["steps"] = True
        with pytest.raises(ConfigError, match=r"episode\.steps"):
            from_dict(d)

    def test_unknown_mode_lists_choices(self):
        d = toy_dict()
        d["training"]["policy_mode"] = "surprise"
        with pytest.raises(ConfigError, match="surprise"):
            from_dict(d)

    def test_patch_larger_than_twice_image(self):
        d = toy_dict()
        d["patch"] = {"height": 97, "width": 18}
        with pytest.raises(ConfigError):
            from_dict(d)

    def test_dims_indivisible_by_scale(self):
        d = toy_dict()
        d["dataset"]["scale"] = 5
        with pytest.raises(ConfigError, match="scale"):
            from_dict(d)

    def test_malformed_conv_spec_entry(self):
        d = toy_dict()
        d["enhancer"]["conv_spec"] = [[16, 3], [16]]
        with pytest.raises(ConfigError, match=r"conv_spec\[1\]"):
            from_dict(d)

    def test_missing_dataset_section(self):
        d = toy_dict()
        del d["dataset"]
        with pytest.raises(ConfigError, match="dataset"):
            from_dict(d)

    def test_non_object_root(self):
        with pytest.raises(ConfigError, match="object"):
            from_dict([1, 2, 3])


class TestRoundTrip:
    def test_toy_config_file_round_trip(self, tmp_path):
        cfg = from_dict(toy_dict())
        path = tmp_path / "run.json"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_directory_config_file_round_trip(self, tmp_path):
        d = toy_dict(
            dataset={
                "kind": "directory",
                "root": "data",
                "train_split": "a.txt",
                "test_split": "b.txt",
                "scale": 2,
            }
        )
        cfg = from_dict(d)
        path = tmp_path / "run.json"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_dict_round_trip_preserves_every_field(self):
        cfg = from_dict(toy_dict())
        assert from_dict(to_dict(cfg)) == cfg

    def test_saved_file_is_plain_json(self, tmp_path):
        cfg = from_dict(toy_dict())
        path = tmp_path / "run.json"
        save_config(cfg, path)
        parsed = json.loads(path.read_text())
        assert parsed["image"]["height"] == 48

    def test_invalid_json_reports_path(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="broken.json"):
            load_config(path)

    def test_missing_file_reports_path(self, tmp_path):
        with pytest.raises(ConfigError, match="absent.json"):
            load_config(tmp_path / "absent.json")


class TestOverride:
    def test_override_replaces_named_fields(self):
        cfg = from_dict(toy_dict())
        out = override(cfg, seed=99)
        assert out.seed == 99
        assert out.policy == cfg.policy

    def test_unknown_field_rejected(self):
        cfg = from_dict(toy_dict())
        with pytest.raises(ConfigError):
            override(cfg, nonexistent=1)
