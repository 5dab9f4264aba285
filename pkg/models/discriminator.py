"""
Projection discriminator with spectrally normalized residual blocks.
"""
import numpy as np

from engine import ShapeError, Tensor, ops
from layers import Module, ProjectionHead
from layers.core import ClassIndex, batch_size_of
from models.blocks import DResBlock
from models.config import DiscriminatorConfig


class Discriminator(Module):
    def __init__(self, cfg: DiscriminatorConfig, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        blocks = []
        in_ch = 3
        for k, (out_ch, down) in enumerate(zip(cfg.channels, cfg.downsample)):
            blocks.append(DResBlock(in_ch, out_ch, down, first=(k == 0), rng=rng,
                                    spectral_norm=cfg.spectral_norm, init=cfg.init, dtype=dtype))
            in_ch = out_ch
        self.blocks = blocks
        self.head = ProjectionHead(cfg.embed_dim, cfg.num_classes, rng, spectral_norm=cfg.spectral_norm,
                                   dtype=dtype)

    def forward(self, image: Tensor, cls: ClassIndex) -> Tensor:
        return discriminator_forward(self, image, cls)


def discriminator_forward(disc: Discriminator, image, cls: ClassIndex) -> Tensor:
    """Residual blocks, ReLU, global sum pooling, then the projection logit of shape (B,)."""
    size = disc.cfg.image_size
    image = image if isinstance(image, Tensor) else Tensor(np.asarray(image))
    if image.ndim != 4 or image.shape[1:] != (3, size, size):
        raise ShapeError(f"discriminator expects (B, 3, {size}, {size}) images, got {image.shape}")
    if batch_size_of(cls) != image.shape[0]:
        raise ShapeError(f"{batch_size_of(cls)} labels for {image.shape[0]} images")
    h = image
    for block in disc.blocks:
        h = block(h)
    pooled = ops.sum(ops.relu(h), axis=(2, 3))
    return disc.head(pooled, cls)
