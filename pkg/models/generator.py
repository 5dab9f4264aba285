"""
Class-conditional residual generator with self-attention.

The same class builds the prunable student (PP-Res blocks) and the wider
unmasked teacher; parameter names coincide wherever both have a layer.
"""
from typing import List, Tuple

import numpy as np

from engine import ShapeError, Tensor, no_record, ops
from layers import BatchNorm2d, Conv2d, Linear, Module, SelfAttention
from layers.core import ClassIndex, batch_size_of
from models.blocks import PPResBlock, ResBlock
from models.config import GeneratorConfig
from pruning import MaskState


class Generator(Module):
    def __init__(self, cfg: GeneratorConfig, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        stem_ch = cfg.blocks[0].in_ch
        self.stem = Linear(cfg.z_dim, cfg.bottom_width * cfg.bottom_width * stem_ch, rng,
                           init=cfg.init, spectral_norm=cfg.spectral_norm, dtype=dtype)
        blocks = []
        for spec in cfg.blocks:
            if cfg.prunable:
                blocks.append(PPResBlock(spec, cfg.num_classes, rng, alpha=cfg.alpha, delta=cfg.delta,
                                         pivot=cfg.pivot, mask_init=cfg.mask_init, init=cfg.init,
                                         transition_init=cfg.transition_init, spectral_norm=cfg.spectral_norm,
                                         pruned=cfg.pruned, dtype=dtype))
            else:
                blocks.append(ResBlock(spec, cfg.num_classes, rng, init=cfg.init,
                                       spectral_norm=cfg.spectral_norm, dtype=dtype))
        self.blocks = blocks
        self.attention = None
        if cfg.attention_after is not None:
            self.attention = SelfAttention(cfg.blocks[cfg.attention_after].out_ch, rng,
                                           reduction=cfg.attention_reduction,
                                           spectral_norm=cfg.spectral_norm, dtype=dtype)
        out_ch = cfg.blocks[-1].out_ch
        self.bn = BatchNorm2d(out_ch, dtype=dtype)
        self.to_rgb = Conv2d(out_ch, 3, 3, rng, init=cfg.init, spectral_norm=cfg.spectral_norm, dtype=dtype)

    @property
    def prunable(self) -> bool:
        return self.cfg.prunable and not self.cfg.pruned

    def masks(self) -> List[MaskState]:
        found = []
        for block in self.blocks:
            if isinstance(block, PPResBlock):
                found.extend(block.masks())
        return found

    def forward(self, z: Tensor, cls: ClassIndex) -> Tuple[Tensor, List[Tensor]]:
        return generator_forward(self, z, cls)


def generator_forward(gen: Generator, z, cls: ClassIndex) -> Tuple[Tensor, List[Tensor]]:
    """
    Generate images and expose every block's output.

    Args:
        gen: Student or teacher generator
        z: Noise (B, z_dim)
        cls: Labels (B,) or class weights (B, num_classes)

    Returns:
        tuple: (images in [-1, 1] of shape (B, 3, S, S), list of block outputs)
    """
    cfg = gen.cfg
    z = z if isinstance(z, Tensor) else Tensor(np.asarray(z, dtype=gen.stem.weight.dtype))
    if z.ndim != 2 or z.shape[1] != cfg.z_dim:
        raise ShapeError(f"noise must be (B, {cfg.z_dim}), got {z.shape}")
    if batch_size_of(cls) != z.shape[0]:
        raise ShapeError(f"{batch_size_of(cls)} class conditions for {z.shape[0]} noise vectors")
    if not np.all(np.isfinite(z.data)):
        raise ValueError("noise contains non-finite values")

    b = z.shape[0]
    h = ops.reshape(gen.stem(z), (b, cfg.blocks[0].in_ch, cfg.bottom_width, cfg.bottom_width))
    taps: List[Tensor] = []
    for k, block in enumerate(gen.blocks):
        h = block(h, cls)
        taps.append(h)
        if gen.attention is not None and k == cfg.attention_after:
            h = gen.attention(h)
    h = ops.relu(gen.bn(h))
    image = ops.tanh(gen.to_rgb(h))
    return image, taps


def teacher_forward(teacher: Generator, z, cls: ClassIndex) -> Tuple[Tensor, List[Tensor]]:
    """Forward pass of the frozen teacher; its parameters never reach a tape."""
    if teacher.cfg.prunable:
        raise ValueError("teacher generator must be built without masks")
    with no_record():
        return generator_forward(teacher, z, cls)
