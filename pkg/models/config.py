"""
Architecture configuration for generators and discriminators.
"""
from typing import List, Optional

from pydantic import BaseModel, Field, model_validator

from pruning.mask import DEFAULT_ALPHA, DEFAULT_DELTA, DEFAULT_INIT, DEFAULT_PIVOT


class BlockSpec(BaseModel):
    """One residual block: input/output width, upsampling, and surviving hidden widths."""

    in_ch: int = Field(gt=0)
    out_ch: int = Field(gt=0)
    upsample: bool = True
    # set only on exported (pruned) generators
    conv1_out: Optional[int] = Field(default=None, ge=0)
    conv2_out: Optional[int] = Field(default=None, ge=0)

    @property
    def hidden1(self) -> int:
        return self.out_ch if self.conv1_out is None else self.conv1_out

    @property
    def hidden2(self) -> int:
        return self.out_ch if self.conv2_out is None else self.conv2_out


def default_generator_blocks(width: int) -> List[BlockSpec]:
    """Five-block schedule: 4w -> 4w -> 2w -> 2w -> w -> w with three upsamplings."""
    chain = [(4, 4, True), (4, 2, True), (2, 2, False), (2, 1, True), (1, 1, False)]
    return [BlockSpec(in_ch=i * width, out_ch=o * width, upsample=up) for i, o, up in chain]


class GeneratorConfig(BaseModel):
    z_dim: int = Field(default=32, gt=0)
    num_classes: int = Field(default=8, ge=2)
    base_width: int = Field(default=32, gt=0)
    bottom_width: int = Field(default=4, gt=0)
    blocks: List[BlockSpec] = Field(default_factory=list)
    attention_after: Optional[int] = 2
    attention_reduction: int = 8
    prunable: bool = True
    spectral_norm: bool = False
    init: str = "orthogonal"
    transition_init: str = "identity"
    alpha: float = Field(default=DEFAULT_ALPHA, gt=0, lt=1)
    delta: float = Field(default=DEFAULT_DELTA, gt=0)
    pivot: float = Field(default=DEFAULT_PIVOT, gt=0, lt=1)
    mask_init: float = DEFAULT_INIT
    pruned: bool = False

    @model_validator(mode="after")
    def _check_chain(self):
        if not self.blocks:
            self.blocks = default_generator_blocks(self.base_width)
        for k in range(len(self.blocks) - 1):
            if self.blocks[k].out_ch != self.blocks[k + 1].in_ch:
                raise ValueError(
                    f"inconsistent channel chain: block {k} outputs {self.blocks[k].out_ch} channels, "
                    f"block {k + 1} expects {self.blocks[k + 1].in_ch}")
        if self.attention_after is not None:
            if not 0 <= self.attention_after < len(self.blocks):
                raise ValueError(f"attention_after={self.attention_after} outside 0..{len(self.blocks) - 1}")
            if self.blocks[self.attention_after].out_ch % self.attention_reduction:
                raise ValueError("attention channels must be divisible by attention_reduction")
        if self.init not in ("orthogonal", "normal"):
            raise ValueError(f"unknown init method: {self.init}")
        if self.transition_init not in ("identity", "orthogonal", "normal"):
            raise ValueError(f"unknown transition init: {self.transition_init}")
        return self

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def image_size(self) -> int:
        return self.bottom_width * 2 ** sum(1 for b in self.blocks if b.upsample)

    def widened(self, factor: int = 2) -> "GeneratorConfig":
        """Unmasked twin with every channel count multiplied by ``factor``."""
        blocks = [BlockSpec(in_ch=b.in_ch * factor, out_ch=b.out_ch * factor, upsample=b.upsample)
                  for b in self.blocks]
        return self.model_copy(update={
            "base_width": self.base_width * factor,
            "blocks": blocks,
            "prunable": False,
            "pruned": False,
        })


class DiscriminatorConfig(BaseModel):
    num_classes: int = Field(default=8, ge=2)
    image_size: int = Field(default=32, gt=0)
    base_width: int = Field(default=32, gt=0)
    channels: List[int] = Field(default_factory=list)
    downsample: List[bool] = Field(default_factory=list)
    spectral_norm: bool = True
    init: str = "orthogonal"

    @model_validator(mode="after")
    def _check_blocks(self):
        if not self.channels:
            w = self.base_width
            self.channels = [w, 2 * w, 4 * w, 4 * w]
        if not self.downsample:
            self.downsample = [True] * (len(self.channels) - 1) + [False]
        if len(self.downsample) != len(self.channels):
            raise ValueError("discriminator channels and downsample flags differ in length")
        size = self.image_size
        for flag in self.downsample:
            if flag:
                if size % 2:
                    raise ValueError(f"image size {self.image_size} cannot be halved {sum(self.downsample)} times")
                size //= 2
        return self

    @property
    def embed_dim(self) -> int:
        return self.channels[-1]
