"""
Run configuration file: architecture, training and dataset sections.
"""
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, Field, model_validator

from models.config import DiscriminatorConfig, GeneratorConfig
from training.config import TrainConfig


class DatasetConfig(BaseModel):
    num_classes: int = Field(default=8, ge=2)
    image_size: int = 32
    n_per_class: int = Field(default=64, ge=1)
    seed: int = 0
    path: Optional[str] = None


class RunConfig(BaseModel):
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = Field(default_factory=DiscriminatorConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)

    @model_validator(mode="after")
    def _consistent(self):
        g, d, t, ds = self.generator, self.discriminator, self.train, self.dataset
        if not g.num_classes == d.num_classes == ds.num_classes:
            raise ValueError(f"class counts disagree: generator {g.num_classes}, discriminator {d.num_classes}, "
                             f"dataset {ds.num_classes}")
        if not g.image_size == d.image_size == ds.image_size:
            raise ValueError(f"image sizes disagree: generator {g.image_size}, discriminator {d.image_size}, "
                             f"dataset {ds.image_size}")
        bad = [k for k in t.distill_blocks if not 0 <= k < g.num_blocks]
        if bad:
            raise ValueError(f"distill_blocks {bad} outside 0..{g.num_blocks - 1}")
        # mask hyperparameters live in the training section
        if (g.alpha, g.delta, g.pivot) != (t.alpha, t.delta, t.pivot):
            self.generator = g.model_copy(update={"alpha": t.alpha, "delta": t.delta, "pivot": t.pivot})
        return self

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        return path

    def with_overrides(self, seed: Optional[int] = None, alpha: Optional[float] = None,
                       ablation: Optional[str] = None, epochs: Optional[int] = None) -> "RunConfig":
        """Apply command-line overrides and re-validate the whole document."""
        data = self.model_dump()
        if seed is not None:
            data["train"]["seed"] = seed
        if alpha is not None:
            data["train"]["alpha"] = alpha
        if ablation is not None:
            data["train"]["ablation"] = ablation
        if epochs is not None:
            data["train"]["epochs"] = epochs
        return RunConfig.model_validate(data)

    def teacher_generator(self) -> GeneratorConfig:
        return self.generator.widened(self.train.teacher_width_factor)
