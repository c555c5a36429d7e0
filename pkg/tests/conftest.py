"""Shared fixtures: tiny network configs sized so gradient checks stay fast."""

import numpy as np
import pytest

from afh import (
    EnhancerConfig,
    EpisodeConfig,
    PatchGeometry,
    PolicyConfig,
    init_params,
)


def tiny_policy_config(**overrides):
    base = dict(
        image_height=8,
        image_width=8,
        image_channels=1,
        encoder_width=6,
        lstm_hidden=6,
    )
    base.update(overrides)
    return PolicyConfig(**base)


def tiny_enhancer_config(**overrides):
    base = dict(
        image_height=8,
        image_width=8,
        image_channels=1,
        patch_height=4,
        patch_width=4,
        global_fc_width=8,
        conv_spec=((2, 3), (2, 3), (1, 3)),
    )
    base.update(overrides)
    return EnhancerConfig(**base)


def tiny_geometry():
    return PatchGeometry(patch_height=4, patch_width=4)


def randomize_params(params, seed, scale=0.3):
    """Overwrite every tensor with uniform noise so the enhancer is no longer
    an identity map and the policy is far from uniform.  Biases are drawn
    positive to keep a good fraction of the ReLU units alive."""
    import torch

    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, tensor in params.named_tensors().items():
            if "bias" in name.split(".")[-1]:
                tensor.uniform_(0.05, 0.5 * scale, generator=gen)
            else:
                tensor.uniform_(-scale, scale, generator=gen)
    return params


@pytest.fixture
def tiny_params():
    return init_params(tiny_policy_config(), tiny_enhancer_config(), seed=7)


@pytest.fixture
def tiny_random_params():
    params = init_params(tiny_policy_config(), tiny_enhancer_config(), seed=7)
    return randomize_params(params, seed=11)


@pytest.fixture
def tiny_episode_config():
    return EpisodeConfig(steps=3, geom=tiny_geometry(), mode="sample")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_image(rng, height=8, width=8, channels=1):
    return rng.uniform(0.0, 1.0, size=(height, width, channels)).astype(np.float32)
