"""
Training hyperparameters.
"""
from typing import List, Optional

from pydantic import BaseModel, Field, field_validator

from objectives.losses import ADV_LOSSES, PP_WEIGHT
from pruning.mask import DEFAULT_ALPHA, DEFAULT_DELTA, DEFAULT_PIVOT

ABLATIONS = ("full", "no_pp", "no_cd", "two_step")


class TrainConfig(BaseModel):
    epochs: int = Field(default=100, gt=0)
    # selectable up to 0.1; 2e-4 keeps small runs stable
    base_lr: float = Field(default=2e-4, gt=0)
    lr_drop_epochs: List[int] = Field(default_factory=lambda: [30, 60, 90])
    lr_drop_factor: float = Field(default=10.0, gt=0)
    batch_size: int = Field(default=16, gt=0)
    grad_accum_steps: int = Field(default=2, ge=1)
    steps_per_epoch: Optional[int] = Field(default=None, gt=0)
    beta1: float = Field(default=0.5, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    seed: int = 0
    ablation: str = "full"
    adv_loss: str = "non_saturating"
    pp_weight: float = Field(default=PP_WEIGHT, ge=0)
    distill_blocks: List[int] = Field(default_factory=lambda: [1, 2, 3, 4])
    alpha: float = Field(default=DEFAULT_ALPHA, gt=0, lt=1)
    delta: float = Field(default=DEFAULT_DELTA, gt=0)
    pivot: float = Field(default=DEFAULT_PIVOT, gt=0, lt=1)
    teacher_width_factor: int = Field(default=2, ge=1)
    dtype: str = "float32"

    @field_validator("lr_drop_epochs")
    @classmethod
    def _sorted_drops(cls, value: List[int]) -> List[int]:
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError(f"lr_drop_epochs must be strictly ascending, got {value}")
        if any(e < 0 for e in value):
            raise ValueError("lr_drop_epochs must be non-negative")
        return value

    @field_validator("ablation")
    @classmethod
    def _known_ablation(cls, value: str) -> str:
        if value not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {value!r}")
        return value

    @field_validator("adv_loss")
    @classmethod
    def _known_adv_loss(cls, value: str) -> str:
        if value not in ADV_LOSSES:
            raise ValueError(f"adv_loss must be one of {ADV_LOSSES}, got {value!r}")
        return value

    @field_validator("dtype")
    @classmethod
    def _known_dtype(cls, value: str) -> str:
        if value not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {value!r}")
        return value

    @property
    def uses_pp(self) -> bool:
        return self.ablation in ("full", "no_cd", "two_step")

    @property
    def uses_cd(self) -> bool:
        return self.ablation in ("full", "no_pp", "two_step")
