# Models package initialization
from models.config import BlockSpec, DiscriminatorConfig, GeneratorConfig, default_generator_blocks
from models.blocks import DResBlock, PPResBlock, ResBlock, ppres_forward
from models.generator import Generator, generator_forward, teacher_forward
from models.discriminator import Discriminator, discriminator_forward
from models.factory import build_discriminator, build_from_config, build_generator

__all__ = [
    "BlockSpec",
    "DiscriminatorConfig",
    "GeneratorConfig",
    "default_generator_blocks",
    "DResBlock",
    "PPResBlock",
    "ResBlock",
    "ppres_forward",
    "Generator",
    "generator_forward",
    "teacher_forward",
    "Discriminator",
    "discriminator_forward",
    "build_discriminator",
    "build_from_config",
    "build_generator",
]
