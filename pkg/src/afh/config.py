"""Run configuration: one JSON file fully determines a run given a seed.

The file groups settings by module and is validated eagerly with the exact
field path in every diagnostic.  ``RunConfig`` is immutable; the nested
config objects are the same ones the modules consume, so cross-field
consistency (image dims vs action grid vs dataset crop vs patch geometry)
holds by construction plus the explicit checks here.

Round trip: ``save_config`` then ``load_config`` reproduces an identical
RunConfig.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

from .episode import EPISODE_MODES, GLOBAL_INPUTS, EpisodeConfig
from .errors import ConfigError
from .image_ops import PatchGeometry
from .nets import EnhancerConfig, PolicyConfig
from .training import POLICY_MODES, UPDATE_SCHEDULES, OptimizerConfig


@dataclass(frozen=True)
class ToyDatasetConfig:
    """Procedurally generated train/val pairs at the model's image dims."""

    train: int
    val: int
    scale: int
    seed: int
    kind: str = "toy"


@dataclass(frozen=True)
class DirectoryDatasetConfig:
    """PNG directory layout: root/images/*.png + root/splits/*.txt."""

    root: str
    train_split: str
    test_split: str
    scale: int
    kind: str = "directory"


DatasetConfig = Union[ToyDatasetConfig, DirectoryDatasetConfig]


@dataclass(frozen=True)
class RunConfig:
    seed: int
    output_dir: str
    policy: PolicyConfig
    enhancer: EnhancerConfig
    episode: EpisodeConfig
    optimizer: OptimizerConfig
    dataset: DatasetConfig
    policy_mode: str = "learned"
    update_schedule: str = "joint"
    eval_every: int = 0
    checkpoint_every: int = 0
    checkpoint: Optional[str] = None


def _expect(d: dict, key: str, types, path: str, default=...):
    if key not in d:
        if default is not ...:
            return default
        raise ConfigError(f"{path}.{key}: missing required field")
    value = d[key]
    if isinstance(value, bool) and bool not in (
        types if isinstance(types, tuple) else (types,)
    ):
        raise ConfigError(f"{path}.{key}: expected {types}, got bool")
    if not isinstance(value, types):
        raise ConfigError(
            f"{path}.{key}: expected {getattr(types, '__name__', types)}, "
            f"got {type(value).__name__}"
        )
    return value


def _section(d: dict, key: str, path: str = "config") -> dict:
    return _expect(d, key, dict, path, default={})


def _dataset_from_dict(d: dict) -> DatasetConfig:
    kind = _expect(d, "kind", str, "dataset")
    if kind == "toy":
        return ToyDatasetConfig(
            train=_expect(d, "train", int, "dataset"),
            val=_expect(d, "val", int, "dataset"),
            scale=_expect(d, "scale", int, "dataset"),
            seed=_expect(d, "seed", int, "dataset", default=0),
        )
    if kind == "directory":
        return DirectoryDatasetConfig(
            root=_expect(d, "root", str, "dataset"),
            train_split=_expect(d, "train_split", str, "dataset"),
            test_split=_expect(d, "test_split", str, "dataset"),
            scale=_expect(d, "scale", int, "dataset"),
        )
    raise ConfigError(f"dataset.kind: unknown kind {kind!r}")


def from_dict(d: dict) -> RunConfig:
    """Build and cross-validate a RunConfig from parsed JSON."""
    if not isinstance(d, dict):
        raise ConfigError(f"config root must be an object, got {type(d).__name__}")

    image = _section(d, "image")
    height = _expect(image, "height", int, "image")
    width = _expect(image, "width", int, "image")
    channels = _expect(image, "channels", int, "image", default=3)

    patch = _section(d, "patch")
    patch_height = _expect(patch, "height", int, "patch")
    patch_width = _expect(patch, "width", int, "patch")
    pad_value = float(_expect(patch, "pad_value", (int, float), "patch", default=0.5))

    pol = _section(d, "policy")
    policy = PolicyConfig(
        image_height=height,
        image_width=width,
        image_channels=channels,
        encoder_width=_expect(pol, "encoder_width", int, "policy", default=256),
        lstm_hidden=_expect(pol, "lstm_hidden", int, "policy", default=512),
        feed_prev_action=_expect(
            pol, "feed_prev_action", bool, "policy", default=True
        ),
    )

    enh = _section(d, "enhancer")
    conv_spec = _expect(enh, "conv_spec", list, "enhancer", default=[])
    for i, layer in enumerate(conv_spec):
        if (
            not isinstance(layer, list)
            or len(layer) != 2
            or not all(isinstance(v, int) for v in layer)
        ):
            raise ConfigError(
                f"enhancer.conv_spec[{i}]: expected [out_channels, kernel]"
            )
    try:
        enhancer = EnhancerConfig(
            image_height=height,
            image_width=width,
            image_channels=channels,
            patch_height=patch_height,
            patch_width=patch_width,
            global_fc_width=_expect(
                enh, "global_fc_width", int, "enhancer", default=256
            ),
            conv_spec=tuple(tuple(layer) for layer in conv_spec),
        )
    except Exception as e:
        raise ConfigError(f"enhancer: {e}") from e

    epi = _section(d, "episode")
    mode = _expect(epi, "mode", str, "episode", default="sample")
    if mode not in EPISODE_MODES:
        raise ConfigError(f"episode.mode: {mode!r} not in {EPISODE_MODES}")
    global_input = _expect(epi, "global_input", str, "episode", default="current")
    if global_input not in GLOBAL_INPUTS:
        raise ConfigError(
            f"episode.global_input: {global_input!r} not in {GLOBAL_INPUTS}"
        )
    try:
        geom = PatchGeometry(
            patch_height=patch_height,
            patch_width=patch_width,
            pad_value=pad_value,
        )
        geom.validate(height, width)
        episode = EpisodeConfig(
            steps=_expect(epi, "steps", int, "episode", default=25),
            geom=geom,
            mode=mode,
            global_input=global_input,
        )
    except ConfigError:
        raise
    except Exception as e:
        raise ConfigError(f"episode: {e}") from e

    opt = _section(d, "optimizer")
    try:
        optimizer = OptimizerConfig(
            learning_rate=float(
                _expect(opt, "learning_rate", (int, float), "optimizer",
                        default=0.0002)
            ),
            beta1=float(_expect(opt, "beta1", (int, float), "optimizer",
                                default=0.5)),
            beta2=float(_expect(opt, "beta2", (int, float), "optimizer",
                                default=0.999)),
            epsilon=float(
                _expect(opt, "epsilon", (int, float), "optimizer", default=1e-8)
            ),
            batch_size=_expect(opt, "batch_size", int, "optimizer", default=8),
            iterations=_expect(opt, "iterations", int, "optimizer", default=1000),
        )
    except ConfigError:
        raise
    except Exception as e:
        raise ConfigError(f"optimizer: {e}") from e

    tr = _section(d, "training")
    policy_mode = _expect(tr, "policy_mode", str, "training", default="learned")
    if policy_mode not in POLICY_MODES:
        raise ConfigError(
            f"training.policy_mode: {policy_mode!r} not in {POLICY_MODES}"
        )
    update_schedule = _expect(
        tr, "update_schedule", str, "training", default="joint"
    )
    if update_schedule not in UPDATE_SCHEDULES:
        raise ConfigError(
            f"training.update_schedule: {update_schedule!r} "
            f"not in {UPDATE_SCHEDULES}"
        )

    if "dataset" not in d:
        raise ConfigError("config.dataset: missing required field")
    dataset = _dataset_from_dict(_expect(d, "dataset", dict, "config"))
    scale = dataset.scale
    if scale < 2:
        raise ConfigError(f"dataset.scale: {scale} must be >= 2")
    if height % scale or width % scale:
        raise ConfigError(
            f"image: dims ({height}, {width}) not divisible by "
            f"dataset.scale {scale}"
        )

    return RunConfig(
        seed=_expect(d, "seed", int, "config", default=0),
        output_dir=_expect(d, "output_dir", str, "config"),
        policy=policy,
        enhancer=enhancer,
        episode=episode,
        optimizer=optimizer,
        dataset=dataset,
        policy_mode=policy_mode,
        update_schedule=update_schedule,
        eval_every=_expect(tr, "eval_every", int, "training", default=0),
        checkpoint_every=_expect(tr, "checkpoint_every", int, "training",
                                 default=0),
        checkpoint=_expect(d, "checkpoint", str, "config", default=None),
    )


def to_dict(cfg: RunConfig) -> dict:
    """Inverse of from_dict; the output reloads to an equal RunConfig."""
    if isinstance(cfg.dataset, ToyDatasetConfig):
        dataset = {
            "kind": "toy",
            "train": cfg.dataset.train,
            "val": cfg.dataset.val,
            "scale": cfg.dataset.scale,
            "seed": cfg.dataset.seed,
        }
    else:
        dataset = {
            "kind": "directory",
            "root": cfg.dataset.root,
            "train_split": cfg.dataset.train_split,
            "test_split": cfg.dataset.test_split,
            "scale": cfg.dataset.scale,
        }
    out = {
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "image": {
            "height": cfg.policy.image_height,
            "width": cfg.policy.image_width,
            "channels": cfg.policy.image_channels,
        },
        "patch": {
            "height": cfg.episode.geom.patch_height,
            "width": cfg.episode.geom.patch_width,
            "pad_value": cfg.episode.geom.pad_value,
        },
        "policy": {
            "encoder_width": cfg.policy.encoder_width,
            "lstm_hidden": cfg.policy.lstm_hidden,
            "feed_prev_action": cfg.policy.feed_prev_action,
        },
        "enhancer": {
            "global_fc_width": cfg.enhancer.global_fc_width,
            "conv_spec": [list(layer) for layer in cfg.enhancer.conv_spec],
        },
        "episode": {
            "steps": cfg.episode.steps,
            "mode": cfg.episode.mode,
            "global_input": cfg.episode.global_input,
        },
        "optimizer": {
            "learning_rate": cfg.optimizer.learning_rate,
            "beta1": cfg.optimizer.beta1,
            "beta2": cfg.optimizer.beta2,
            "epsilon": cfg.optimizer.epsilon,
            "batch_size": cfg.optimizer.batch_size,
            "iterations": cfg.optimizer.iterations,
        },
        "training": {
            "policy_mode": cfg.policy_mode,
            "update_schedule": cfg.update_schedule,
            "eval_every": cfg.eval_every,
            "checkpoint_every": cfg.checkpoint_every,
        },
        "dataset": dataset,
    }
    if cfg.checkpoint is not None:
        out["checkpoint"] = cfg.checkpoint
    return out


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: {e.msg}") from e
    return from_dict(data)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(to_dict(cfg), indent=2) + "\n")


def override(cfg: RunConfig, **kwargs) -> RunConfig:
    """replace() with named-field validation for CLI-sourced overrides."""
    for key in kwargs:
        if key not in RunConfig.__dataclass_fields__:
            raise ConfigError(f"unknown config field {key!r}")
    return replace(cfg, **kwargs)
