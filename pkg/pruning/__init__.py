# Pruning package initialization
from pruning.mask import (
    BinarizationIncompleteError,
    MaskState,
    active_channels,
    binarization_rule,
    binarize_check,
    mask_forward,
    mask_regularizer,
    mask_values,
)
from pruning.transition import TransitionLayer, transition_forward

__all__ = [
    "BinarizationIncompleteError",
    "MaskState",
    "active_channels",
    "binarization_rule",
    "binarize_check",
    "mask_forward",
    "mask_regularizer",
    "mask_values",
    "TransitionLayer",
    "transition_forward",
]
