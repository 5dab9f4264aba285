# Objectives package initialization
from objectives.distill import (
    ClassCondNorm,
    ClassCondNormParams,
    aggregate_cd,
    attention_map,
    block_distill_losses,
    class_norm_teacher,
    distill_loss,
    feature_distance,
)
from objectives.losses import (
    ADV_LOSSES,
    PP_WEIGHT,
    LossBundle,
    adversarial_losses,
    aggregate_pp,
    discriminator_loss,
    generator_loss,
    total_loss,
)

__all__ = [
    "ClassCondNorm",
    "ClassCondNormParams",
    "aggregate_cd",
    "attention_map",
    "block_distill_losses",
    "class_norm_teacher",
    "distill_loss",
    "feature_distance",
    "ADV_LOSSES",
    "PP_WEIGHT",
    "LossBundle",
    "adversarial_losses",
    "aggregate_pp",
    "discriminator_loss",
    "generator_loss",
    "total_loss",
]
