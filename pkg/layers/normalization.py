"""
Batch normalization, plain and class-conditional.
"""
from typing import Tuple

import numpy as np

from engine import Parameter, ShapeError, Tensor, ops
from layers.core import ClassEmbedding, ClassIndex, batch_size_of
from layers.module import Module

BN_EPS = 1e-5


class _BatchStatistics(Module):
    """Shared standardization with running statistics."""

    def __init__(self, channels: int, eps: float = BN_EPS, momentum: float = 0.1, dtype=np.float32):
        super().__init__()
        if eps <= 0:
            raise ValueError(f"batch norm eps must be positive, got {eps}")
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def standardize(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"{self.path or 'batchnorm'}: expected (B, {self.channels}, H, W), got {x.shape}")
        if x.shape[0] == 0:
            raise ShapeError(f"{self.path or 'batchnorm'}: zero batch")
        if self.training:
            mu, var = ops.batch_stats(x)
            n = x.shape[0] * x.shape[2] * x.shape[3]
            unbiased = var.data * (n / (n - 1)) if n > 1 else var.data
            m = self.momentum
            self.running_mean.data = ((1 - m) * self.running_mean.data + m * mu.data).astype(self.running_mean.dtype)
            self.running_var.data = ((1 - m) * self.running_var.data + m * unbiased).astype(self.running_var.dtype)
        else:
            mu, var = self.running_mean, self.running_var
        centered = ops.sub(x, ops.reshape(mu, (1, self.channels, 1, 1)))
        scale = ops.sqrt(ops.add(ops.reshape(var, (1, self.channels, 1, 1)), self.eps))
        return ops.div(centered, scale)


class BatchNorm2d(_BatchStatistics):
    """Unconditional batch norm with per-channel gain and bias."""

    def __init__(self, channels: int, eps: float = BN_EPS, momentum: float = 0.1, dtype=np.float32):
        super().__init__(channels, eps, momentum, dtype)
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        x_hat = self.standardize(x)
        return ops.add(ops.mul(x_hat, ops.reshape(self.gamma, (1, self.channels, 1, 1))),
                       ops.reshape(self.beta, (1, self.channels, 1, 1)))


class CondBatchNorm2d(_BatchStatistics):
    """Batch norm whose gain and bias rows are selected by class."""

    def __init__(self, channels: int, num_classes: int, eps: float = BN_EPS, momentum: float = 0.1,
                 dtype=np.float32):
        super().__init__(channels, eps, momentum, dtype)
        self.gain = ClassEmbedding(num_classes, channels, fill=1.0, dtype=dtype)
        self.bias = ClassEmbedding(num_classes, channels, fill=0.0, dtype=dtype)

    def class_affine(self, cls: ClassIndex) -> Tuple[Tensor, Tensor]:
        b = batch_size_of(cls)
        gamma = ops.reshape(self.gain(cls), (b, self.channels, 1, 1))
        beta = ops.reshape(self.bias(cls), (b, self.channels, 1, 1))
        return gamma, beta

    def forward(self, x: Tensor, cls: ClassIndex) -> Tensor:
        if batch_size_of(cls) != x.shape[0]:
            raise ShapeError(f"{self.path or 'cond_bn'}: {batch_size_of(cls)} labels for batch of {x.shape[0]}")
        x_hat = self.standardize(x)
        gamma, beta = self.class_affine(cls)
        return ops.add(ops.mul(x_hat, gamma), beta)


def cond_batchnorm(x: Tensor, cls: ClassIndex, state: CondBatchNorm2d, training: bool) -> Tensor:
    """Functional entry point: run ``state`` in the requested mode."""
    previous = state.training
    state.training = training
    try:
        return state(x, cls)
    finally:
        state.training = previous
