"""
Shared fixtures: tiny 64-bit configurations that train in seconds.
"""
import os
import sys

import numpy as np
import pytest

# Add repository root to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from harness.config import DatasetConfig, RunConfig
from models.config import BlockSpec, DiscriminatorConfig, GeneratorConfig
from training.config import TrainConfig

NUM_CLASSES = 3
WIDTH = 8


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_gen_cfg():
    # 2x2 bottom, three upsamplings -> 16x16 images
    return GeneratorConfig(z_dim=8, num_classes=NUM_CLASSES, base_width=WIDTH, bottom_width=2)


@pytest.fixture
def two_block_cfg():
    """Two 16-channel blocks without attention, used for export checks."""
    return GeneratorConfig(
        z_dim=4,
        num_classes=NUM_CLASSES,
        base_width=4,
        bottom_width=4,
        blocks=[BlockSpec(in_ch=16, out_ch=16, upsample=True), BlockSpec(in_ch=16, out_ch=16, upsample=False)],
        attention_after=None,
    )


@pytest.fixture
def tiny_run(tiny_gen_cfg):
    return RunConfig(
        generator=tiny_gen_cfg,
        discriminator=DiscriminatorConfig(num_classes=NUM_CLASSES, image_size=16, base_width=WIDTH),
        train=TrainConfig(epochs=2, batch_size=2, grad_accum_steps=2, steps_per_epoch=2, dtype="float64",
                          seed=7),
        dataset=DatasetConfig(num_classes=NUM_CLASSES, image_size=16, n_per_class=4, seed=3),
    )


def freeze(mask, keep):
    """Freeze ``mask`` with m* = keep (a 0/1 sequence)."""
    mask.m_star.data = np.asarray(keep, dtype=mask.m_star.dtype)
    mask.frozen_penalty = float(np.abs(mask.weight.data + 1.0).sum())
    mask.frozen = True
    return mask
