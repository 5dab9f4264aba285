"""
Projection head of a conditional discriminator.
"""
from typing import Optional

import numpy as np

from engine import Parameter, ShapeError, Tensor, ops
from layers.core import ClassEmbedding, ClassIndex
from layers.module import Module
from layers.spectral import SpectralNormState, spectral_normalize


def projection_logit(features: Tensor, cls: ClassIndex, head_weights: Tensor, embed: ClassEmbedding,
                     head_bias: Optional[Tensor] = None) -> Tensor:
    """
    Unconditional linear score plus the inner product with the class embedding.

    Args:
        features: Pooled features (B, D)
        cls: Class labels (B,)
        head_weights: Unconditional head (D,)
        embed: Class embedding table with dim D
        head_bias: Optional scalar bias of shape (1,)

    Returns:
        Tensor: Logits (B,)
    """
    if features.ndim != 2:
        raise ShapeError(f"projection features must be (B, D), got {features.shape}")
    dim = features.shape[1]
    if head_weights.shape != (dim,) or embed.dim != dim:
        raise ShapeError(f"projection dims disagree: features {dim}, head {head_weights.shape}, embed {embed.dim}")
    b = features.shape[0]
    unconditional = ops.reshape(ops.matmul(features, ops.reshape(head_weights, (dim, 1))), (b,))
    conditional = ops.sum(ops.mul(features, embed(cls)), axis=1)
    logit = ops.add(unconditional, conditional)
    if head_bias is not None:
        logit = ops.add(logit, head_bias)
    return logit


class ProjectionHead(Module):
    def __init__(self, dim: int, num_classes: int, rng: np.random.Generator, spectral_norm: bool = True,
                 dtype=np.float32):
        super().__init__()
        self.dim = dim
        self.weight = Parameter((rng.standard_normal(dim) / np.sqrt(dim)).astype(dtype))
        self.bias = Parameter(np.zeros(1, dtype=dtype))
        self.embed = ClassEmbedding(num_classes, dim, rng, dtype=dtype)
        self.sn = SpectralNormState(1, dim, rng, dtype=dtype) if spectral_norm else None

    def forward(self, features: Tensor, cls: ClassIndex) -> Tensor:
        weight = self.weight
        if self.sn is not None:
            weight = ops.reshape(spectral_normalize(ops.reshape(weight, (1, self.dim)), self.sn,
                                                    update=self.training), (self.dim,))
        self.record_cost("linear", 2 * self.dim, 1)
        return projection_logit(features, cls, weight, self.embed, self.bias)
