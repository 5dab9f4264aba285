"""
Class-aware distillation between teacher and student block outputs.

Teacher features are standardized per sample and channel, rescaled by a
trainable class-conditional affine, and reduced to a spatial attention map
(sum of squared activations over channels). Student maps are compared with
teacher maps after l2 normalization, so the two networks may have different
channel counts.
"""
from typing import List, Sequence

import numpy as np

from engine import ShapeError, Tensor, ops
from layers import ClassEmbedding, Module
from layers.core import ClassIndex, batch_size_of
from utils.logging import logger

NORM_EPS = 1e-5
ZERO_MAP_EPS = 1e-12


class ClassCondNorm(Module):
    """Per-class gain and bias for one distilled block."""

    def __init__(self, channels: int, num_classes: int, dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.gain = ClassEmbedding(num_classes, channels, fill=1.0, dtype=dtype)
        self.bias = ClassEmbedding(num_classes, channels, fill=0.0, dtype=dtype)


class ClassCondNormParams(Module):
    """One ClassCondNorm per distilled block, sized to the teacher's channels."""

    def __init__(self, teacher_channels: Sequence[int], num_classes: int, dtype=np.float32):
        super().__init__()
        self.norms = [ClassCondNorm(c, num_classes, dtype=dtype) for c in teacher_channels]

    def __len__(self) -> int:
        return len(self.norms)

    def __getitem__(self, index: int) -> ClassCondNorm:
        return self.norms[index]


def attention_map(features: Tensor) -> Tensor:
    """Sum over channels of squared activations: (B, C, H, W) -> (B, H, W)."""
    if features.ndim != 4:
        raise ShapeError(f"attention_map expects (B, C, H, W), got {features.shape}")
    return ops.sum(ops.square(features), axis=1)


def class_norm_teacher(features: Tensor, cls: ClassIndex, params: ClassCondNorm) -> Tensor:
    """
    Standardize each channel over its spatial extent, then apply gamma(cls), beta(cls).

    Args:
        features: Teacher block output (B, C_T, H, W)
        cls: Labels (B,) or class weights (B, K)
        params: Gain/bias tables with C_T columns

    Returns:
        Tensor: (B, C_T, H, W)
    """
    if features.ndim != 4 or features.shape[1] != params.channels:
        raise ShapeError(f"teacher features {features.shape} do not match {params.channels} norm channels")
    b, c, h, w = features.shape
    if h * w < 2:
        raise ShapeError(f"class-conditional normalization needs at least 2 positions, got {h}x{w}")
    if batch_size_of(cls) != b:
        raise ShapeError(f"{batch_size_of(cls)} labels for {b} feature maps")
    mu = ops.mean(features, axis=(2, 3), keepdims=True)
    centered = ops.sub(features, mu)
    var = ops.mean(ops.square(centered), axis=(2, 3), keepdims=True)
    x_hat = ops.div(centered, ops.sqrt(ops.add(var, NORM_EPS)))
    gamma = ops.reshape(params.gain(cls), (b, c, 1, 1))
    beta = ops.reshape(params.bias(cls), (b, c, 1, 1))
    return ops.add(ops.mul(x_hat, gamma), beta)


def distill_loss(teacher_map: Tensor, student_map: Tensor) -> Tensor:
    """
    Batch mean of || F_T / ||F_T|| - F_S / ||F_S|| ||_2 with per-sample norms.

    Maps whose norm is below 1e-12 normalize to the zero map.
    """
    if teacher_map.shape != student_map.shape:
        raise ShapeError(f"attention maps differ in shape: {teacher_map.shape} vs {student_map.shape}")
    if teacher_map.ndim != 3:
        raise ShapeError(f"attention maps must be (B, H, W), got {teacher_map.shape}")
    b = teacher_map.shape[0]
    flat_t = ops.reshape(teacher_map, (b, -1))
    flat_s = ops.reshape(student_map, (b, -1))
    for label, flat in (("teacher", flat_t), ("student", flat_s)):
        dead = np.sqrt((flat.data.astype(np.float64) ** 2).sum(axis=1)) < ZERO_MAP_EPS
        if dead.any():
            logger.warning(f"{int(dead.sum())} zero-norm {label} attention map(s) treated as zero maps")
    diff = ops.sub(ops.l2_normalize(flat_t, axis=1, eps=ZERO_MAP_EPS),
                   ops.l2_normalize(flat_s, axis=1, eps=ZERO_MAP_EPS))
    return ops.mean(ops.l2_norm(diff, axis=1))


def aggregate_cd(per_block_losses: Sequence[Tensor]) -> Tensor:
    """Mean of the per-block distillation losses; an empty list is an error."""
    if not per_block_losses:
        raise ValueError("no distillation blocks configured; disable distillation explicitly instead")
    total = per_block_losses[0]
    for loss in per_block_losses[1:]:
        total = ops.add(total, loss)
    return ops.mul(total, 1.0 / len(per_block_losses))


def block_distill_losses(teacher_taps: Sequence[Tensor], student_taps: Sequence[Tensor], cls: ClassIndex,
                         params: ClassCondNormParams, blocks: Sequence[int]) -> List[Tensor]:
    """Distillation loss for each selected block index."""
    if len(blocks) != len(params):
        raise ValueError(f"{len(blocks)} distilled blocks but {len(params)} normalization tables")
    losses = []
    for norm, k in zip(params.norms, blocks):
        teacher = attention_map(class_norm_teacher(teacher_taps[k], cls, norm))
        losses.append(distill_loss(teacher, attention_map(student_taps[k])))
    return losses


def feature_distance(teacher_features: Tensor, student_features: Tensor) -> Tensor:
    """
    Mean squared difference of channel-averaged features.

    Only a baseline for comparison with the attention-map loss; it is not
    part of the training objective.
    """
    if teacher_features.ndim != 4 or student_features.ndim != 4:
        raise ShapeError("feature_distance expects (B, C, H, W) inputs")
    a = ops.mean(teacher_features, axis=1)
    b = ops.mean(student_features, axis=1)
    if a.shape != b.shape:
        raise ShapeError(f"spatial shapes differ: {a.shape} vs {b.shape}")
    return ops.mean(ops.square(ops.sub(a, b)))
