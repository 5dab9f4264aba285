"""
Linear, convolution and class-embedding layers.
"""
from typing import Optional, Union

import numpy as np

from engine import Parameter, ShapeError, Tensor, ops
from layers.module import Module, init_weight
from layers.spectral import SpectralNormState, spectral_normalize

ClassIndex = Union[np.ndarray, Tensor]


class Linear(Module):
    """y = x W^T + b with W of shape (out, in)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 bias: bool = True, spectral_norm: bool = False, init: str = "orthogonal",
                 dtype=np.float32):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(init_weight(rng, (out_features, in_features), init, dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype)) if bias else None
        self.sn = SpectralNormState(out_features, in_features, rng, dtype=dtype) if spectral_norm else None

    def effective_weight(self) -> Tensor:
        if self.sn is None:
            return self.weight
        return spectral_normalize(self.weight, self.sn, update=self.training)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"{self.path or 'linear'}: expected (B, {self.in_features}), got {x.shape}")
        out = ops.matmul(x, ops.transpose(self.effective_weight(), (1, 0)))
        if self.bias is not None:
            out = ops.add(out, self.bias)
        self.record_cost("linear", self.in_features * self.out_features, self.out_features)
        return out


class Conv2d(Module):
    """Square-kernel 2-D convolution; 3x3 kernels are same-padded by default."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator,
                 stride: int = 1, padding: Optional[int] = None, bias: bool = True,
                 spectral_norm: bool = False, init: str = "orthogonal", dtype=np.float32):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        self.weight = Parameter(init_weight(rng, (out_channels, in_channels, kernel_size, kernel_size), init, dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype)) if bias else None
        self.sn = (SpectralNormState(out_channels, in_channels * kernel_size * kernel_size, rng, dtype=dtype)
                   if spectral_norm else None)

    def effective_weight(self) -> Tensor:
        if self.sn is None:
            return self.weight
        return spectral_normalize(self.weight, self.sn, update=self.training)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim == 4 and x.shape[1] != self.in_channels:
            raise ShapeError(f"{self.path or 'conv'}: input has {x.shape[1]} channels, "
                             f"layer expects {self.in_channels}")
        out = ops.conv2d(x, self.effective_weight(), self.bias, self.stride, self.padding)
        k = self.kernel_size
        self.record_cost("conv", k * k * self.in_channels * self.out_channels * out.shape[2] * out.shape[3],
                         self.out_channels)
        return out


class ClassEmbedding(Module):
    """Per-class rows of a (num_classes, dim) table."""

    def __init__(self, num_classes: int, dim: int, rng: Optional[np.random.Generator] = None,
                 fill: Optional[float] = None, dtype=np.float32):
        super().__init__()
        self.num_classes = num_classes
        self.dim = dim
        if fill is not None:
            table = np.full((num_classes, dim), fill, dtype=dtype)
        else:
            table = (rng.standard_normal((num_classes, dim)) * 0.02).astype(dtype)
        self.table = Parameter(table)

    def forward(self, cls: ClassIndex) -> Tensor:
        """
        Look up class rows.

        Args:
            cls: Integer labels of shape (B,), or a (B, num_classes) weight
                matrix whose rows mix the table rows convexly

        Returns:
            Tensor: (B, dim)
        """
        if isinstance(cls, Tensor) or np.issubdtype(np.asarray(cls).dtype, np.floating):
            weights = cls if isinstance(cls, Tensor) else Tensor(np.asarray(cls, dtype=self.table.dtype))
            if weights.ndim != 2 or weights.shape[1] != self.num_classes:
                raise ShapeError(f"class weights must be (B, {self.num_classes}), got {weights.shape}")
            return ops.matmul(weights, self.table)
        index = np.asarray(cls)
        if index.ndim != 1:
            raise ShapeError(f"class labels must be 1-D, got shape {index.shape}")
        if index.size and (index.min() < 0 or index.max() >= self.num_classes):
            raise ValueError(f"class label out of range [0, {self.num_classes}): {index.tolist()}")
        return ops.take_rows(self.table, index)


def batch_size_of(cls: ClassIndex) -> int:
    return cls.shape[0] if isinstance(cls, Tensor) else int(np.asarray(cls).shape[0])
