# Tensor engine package initialization
from engine.tensor import (
    DEFAULT_DTYPE,
    NonFiniteError,
    Parameter,
    ShapeError,
    Tape,
    Tensor,
    backward,
    current_tape,
    no_record,
)
from engine import ops
from engine.gradcheck import GradCheckReport, grad_check

__all__ = [
    "DEFAULT_DTYPE",
    "NonFiniteError",
    "Parameter",
    "ShapeError",
    "Tape",
    "Tensor",
    "backward",
    "current_tape",
    "no_record",
    "ops",
    "GradCheckReport",
    "grad_check",
]
