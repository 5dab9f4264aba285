"""
Seeded construction of generators and discriminators from their configs.
"""
from typing import Union

import numpy as np

from models.config import DiscriminatorConfig, GeneratorConfig
from models.discriminator import Discriminator
from models.generator import Generator
from utils.logging import logger

ModelConfig = Union[GeneratorConfig, DiscriminatorConfig]


def build_generator(cfg: GeneratorConfig, seed: int = 0, dtype=np.float32) -> Generator:
    gen = Generator(cfg, np.random.default_rng(seed), dtype=dtype).assign_paths()
    kind = "teacher" if not cfg.prunable else ("pruned student" if cfg.pruned else "student")
    logger.debug(f"built {kind} generator: {cfg.num_blocks} blocks, {cfg.image_size}x{cfg.image_size}, "
                 f"seed {seed}, init {cfg.init}")
    return gen


def build_discriminator(cfg: DiscriminatorConfig, seed: int = 0, dtype=np.float32) -> Discriminator:
    disc = Discriminator(cfg, np.random.default_rng(seed), dtype=dtype).assign_paths()
    logger.debug(f"built discriminator: channels {cfg.channels}, seed {seed}")
    return disc


def build_from_config(cfg: ModelConfig, seed: int = 0, dtype=np.float32):
    """
    Build a model with parameters drawn from a stream seeded by ``seed``.

    Args:
        cfg: Generator or discriminator configuration
        seed: Initialization seed
        dtype: Storage dtype of every parameter and buffer

    Returns:
        Generator or Discriminator with module paths assigned
    """
    if isinstance(cfg, GeneratorConfig):
        return build_generator(cfg, seed, dtype)
    if isinstance(cfg, DiscriminatorConfig):
        return build_discriminator(cfg, seed, dtype)
    raise TypeError(f"unsupported config type: {type(cfg).__name__}")
