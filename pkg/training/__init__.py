# Training package initialization
from training.config import ABLATIONS, TrainConfig
from training.optim import NonFiniteGradientError, OptimState, adam_step, lr_at_epoch
from training.trainer import (
    TrainingDivergedError,
    TrainResult,
    TrainState,
    accumulate_gradients,
    teacher_train,
    train_loop,
    train_step,
)

__all__ = [
    "ABLATIONS",
    "TrainConfig",
    "NonFiniteGradientError",
    "OptimState",
    "adam_step",
    "lr_at_epoch",
    "TrainingDivergedError",
    "TrainResult",
    "TrainState",
    "accumulate_gradients",
    "teacher_train",
    "train_loop",
    "train_step",
]
