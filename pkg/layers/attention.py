"""
Self-attention over spatial positions with a zero-initialized residual gate.
"""
import numpy as np

from engine import Parameter, ShapeError, Tensor, ops
from layers.core import Conv2d
from layers.module import Module


class SelfAttention(Module):
    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = 8,
                 spectral_norm: bool = False, dtype=np.float32):
        super().__init__()
        if channels % reduction:
            raise ValueError(f"attention channels {channels} not divisible by reduction {reduction}")
        self.channels = channels
        self.reduction = reduction
        inner = channels // reduction
        self.f = Conv2d(channels, inner, 1, rng, bias=False, spectral_norm=spectral_norm, dtype=dtype)
        self.g = Conv2d(channels, inner, 1, rng, bias=False, spectral_norm=spectral_norm, dtype=dtype)
        self.h = Conv2d(channels, channels, 1, rng, bias=False, spectral_norm=spectral_norm, dtype=dtype)
        self.gamma = Parameter(np.zeros(1, dtype=dtype))
        self.last_attention = None

    def forward(self, x: Tensor) -> Tensor:
        b, c, hh, ww = x.shape
        n = hh * ww
        if n == 0:
            raise ShapeError(f"{self.path or 'attention'}: empty spatial extent {hh}x{ww}")
        if c != self.channels:
            raise ShapeError(f"{self.path or 'attention'}: expected {self.channels} channels, got {c}")
        inner = c // self.reduction

        query = ops.reshape(self.f(x), (b, inner, n))
        key = ops.reshape(self.g(x), (b, inner, n))
        value = ops.reshape(self.h(x), (b, c, n))

        # attention[b, i, j]: weight of position j for output position i
        scores = ops.matmul(ops.transpose(query, (0, 2, 1)), key)
        attention = ops.softmax(scores, axis=-1)
        self.last_attention = attention.data
        attended = ops.matmul(value, ops.transpose(attention, (0, 2, 1)))
        self.record_cost("attention", n * inner * n + c * n * n)

        out = ops.reshape(attended, (b, c, hh, ww))
        return ops.add(x, ops.mul(ops.reshape(self.gamma, (1, 1, 1, 1)), out))


def self_attention(x: Tensor, params: SelfAttention) -> Tensor:
    return params(x)
