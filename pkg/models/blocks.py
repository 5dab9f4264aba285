"""
Residual blocks: the plain generator block, its progressive-pruning variant,
and the downsampling discriminator block.
"""
from typing import Optional

import numpy as np

from engine import ShapeError, Tensor, ops
from layers import CondBatchNorm2d, Conv2d, Module
from layers.core import ClassIndex
from models.config import BlockSpec
from pruning import MaskState, TransitionLayer, mask_forward


class ResBlock(Module):
    """cbn1 -> relu -> (up) -> conv1 -> cbn2 -> relu -> conv2, plus a 1x1 skip."""

    def __init__(self, spec: BlockSpec, num_classes: int, rng: np.random.Generator,
                 init: str = "orthogonal", spectral_norm: bool = False, dtype=np.float32):
        super().__init__()
        self.in_ch = spec.in_ch
        self.out_ch = spec.out_ch
        self.upsample = spec.upsample
        self.cbn1 = CondBatchNorm2d(spec.in_ch, num_classes, dtype=dtype)
        self.conv1 = Conv2d(spec.in_ch, spec.hidden1, 3, rng, init=init, spectral_norm=spectral_norm, dtype=dtype)
        self.cbn2 = CondBatchNorm2d(spec.hidden1, num_classes, dtype=dtype)
        self.conv2 = Conv2d(spec.hidden1, self._conv2_width(spec), 3, rng, init=init,
                            spectral_norm=spectral_norm, dtype=dtype)
        self.skip = Conv2d(spec.in_ch, spec.out_ch, 1, rng, init=init, spectral_norm=spectral_norm, dtype=dtype)

    def _conv2_width(self, spec: BlockSpec) -> int:
        return spec.out_ch

    def _check_input(self, x: Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeError(f"{self.path or 'block'}: expected {self.in_ch} input channels, got shape {x.shape}")

    def _first_half(self, x: Tensor, cls: ClassIndex) -> Tensor:
        h = ops.relu(self.cbn1(x, cls))
        if self.upsample:
            h = ops.upsample2x(h)
        return self.cbn2(self.conv1(h), cls)

    def _skip(self, x: Tensor) -> Tensor:
        if self.upsample:
            x = ops.upsample2x(x)
        return self.skip(x)

    def forward(self, x: Tensor, cls: ClassIndex) -> Tensor:
        self._check_input(x)
        h = self.conv2(ops.relu(self._first_half(x, cls)))
        return ops.add(h, self._skip(x))


class PPResBlock(ResBlock):
    """
    Residual block with a mask after each convolution and a transition layer.

    Main path: cbn1 -> relu -> (up) -> conv1 -> cbn2 -> mask1 -> relu -> conv2
    -> mask2 -> transition. Each mask sits right before the ReLU that consumes
    its channels (mask2 feeds the transition directly), so a zeroed channel
    carries exactly zero downstream and can be removed. After export the
    masks are None and the convolutions only hold surviving channels.
    """

    def __init__(self, spec: BlockSpec, num_classes: int, rng: np.random.Generator,
                 alpha: float, delta: float, pivot: float, mask_init: float,
                 init: str = "orthogonal", transition_init: str = "identity",
                 spectral_norm: bool = False, pruned: bool = False, dtype=np.float32):
        super().__init__(spec, num_classes, rng, init=init, spectral_norm=spectral_norm, dtype=dtype)
        self.mask1: Optional[MaskState] = None
        self.mask2: Optional[MaskState] = None
        if not pruned:
            self.mask1 = MaskState(spec.hidden1, delta, pivot, alpha, mask_init, dtype=dtype)
            self.mask2 = MaskState(spec.hidden2, delta, pivot, alpha, mask_init, dtype=dtype)
        self.transition = TransitionLayer(spec.hidden2, spec.out_ch, rng, init=transition_init, dtype=dtype)

    def _conv2_width(self, spec: BlockSpec) -> int:
        return spec.hidden2

    def masks(self):
        return [m for m in (self.mask1, self.mask2) if m is not None]

    def forward(self, x: Tensor, cls: ClassIndex) -> Tensor:
        self._check_input(x)
        h = self._first_half(x, cls)
        if self.mask1 is not None:
            h = mask_forward(h, self.mask1)
        h = self.conv2(ops.relu(h))
        if self.mask2 is not None:
            h = mask_forward(h, self.mask2)
        h = self.transition(h)
        return ops.add(h, self._skip(x))


def ppres_forward(block: PPResBlock, x: Tensor, cls: ClassIndex) -> Tensor:
    return block(x, cls)


class DResBlock(Module):
    """Discriminator block: (relu) -> conv -> relu -> conv -> (pool), skip 1x1 -> (pool)."""

    def __init__(self, in_ch: int, out_ch: int, downsample: bool, first: bool, rng: np.random.Generator,
                 spectral_norm: bool = True, init: str = "orthogonal", dtype=np.float32):
        super().__init__()
        self.in_ch = in_ch
        self.downsample = downsample
        self.first = first
        self.conv1 = Conv2d(in_ch, out_ch, 3, rng, init=init, spectral_norm=spectral_norm, dtype=dtype)
        self.conv2 = Conv2d(out_ch, out_ch, 3, rng, init=init, spectral_norm=spectral_norm, dtype=dtype)
        self.skip = Conv2d(in_ch, out_ch, 1, rng, init=init, spectral_norm=spectral_norm, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeError(f"{self.path or 'dblock'}: expected {self.in_ch} input channels, got shape {x.shape}")
        h = x if self.first else ops.relu(x)
        h = self.conv2(ops.relu(self.conv1(h)))
        s = self.skip(x)
        if self.downsample:
            h = ops.avg_pool2x(h)
            s = ops.avg_pool2x(s)
        return ops.add(h, s)
