"""
Transition layer: a 1x1 convolution that restores a block's output width.
"""
import numpy as np

from engine import ShapeError, Tensor
from layers.core import Conv2d


class TransitionLayer(Conv2d):
    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 init: str = "identity", dtype=np.float32):
        super().__init__(in_channels, out_channels, 1, rng, padding=0,
                         init="orthogonal" if init == "identity" else init, dtype=dtype)
        if init == "identity":
            eye = np.eye(out_channels, in_channels, dtype=dtype)
            self.weight.data = eye.reshape(out_channels, in_channels, 1, 1)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(f"{self.path or 'transition'}: expected {self.in_channels} input channels, "
                             f"got shape {x.shape}")
        return super().forward(x)


def transition_forward(x: Tensor, layer: TransitionLayer) -> Tensor:
    return layer(x)
