"""
Learnable channel masks with a sparse regularizer and the binarization trick.

A mask holds one parameter w_i per output channel of the convolution it
follows. While training, m_i = sigmoid(delta * w_i) scales the channel. Once
more than a fraction alpha of the m_i sit at or below the pivot, the mask
snaps to 0/1 values and its parameters stop changing.
"""
from typing import Dict, List, Optional, Tuple

import numpy as np

from engine import Parameter, ShapeError, Tensor, ops
from layers.module import Module
from utils.logging import logger

DEFAULT_DELTA = 1e3
DEFAULT_PIVOT = 0.005
DEFAULT_ALPHA = 0.7
DEFAULT_INIT = 0.01


class BinarizationIncompleteError(RuntimeError):
    """Raised when an operation needs binarized masks but a mask is still soft."""


class MaskState(Module):
    def __init__(self, n: int, delta: float = DEFAULT_DELTA, pivot: float = DEFAULT_PIVOT,
                 alpha: float = DEFAULT_ALPHA, init_value: float = DEFAULT_INIT, dtype=np.float32):
        super().__init__()
        if delta <= 0:
            raise ValueError(f"mask delta must be positive, got {delta}")
        if not 0 < pivot < 1:
            raise ValueError(f"mask pivot must lie in (0, 1), got {pivot}")
        if not 0 < alpha < 1:
            raise ValueError(f"compression ratio threshold alpha must lie in (0, 1), got {alpha}")
        self.n = n
        self.delta = float(delta)
        self.pivot = float(pivot)
        self.alpha = float(alpha)
        self.frozen = False
        self.frozen_penalty = 0.0
        self.weight = Parameter(np.full(n, init_value, dtype=dtype))
        self.register_buffer("m_star", np.ones(n, dtype=dtype))

    def is_trainable(self) -> bool:
        return not self.frozen

    def soft_values(self) -> np.ndarray:
        """Current m_i computed from W without touching the tape."""
        return 1.0 / (1.0 + np.exp(-self.delta * self.weight.data.astype(np.float64)))

    def set_soft_values(self, values) -> None:
        """Set W so that sigmoid(delta * w_i) reproduces ``values``."""
        values = np.clip(np.asarray(values, dtype=np.float64), 1e-300, 1 - 1e-16)
        self.weight.data = (np.log(values / (1 - values)) / self.delta).astype(self.weight.dtype)

    def zero_fraction(self) -> float:
        values = self.m_star.data if self.frozen else self.soft_values()
        if self.n == 0:
            return 0.0
        return float(np.count_nonzero(values <= self.pivot)) / self.n

    def metadata(self) -> Dict[str, object]:
        return {
            "n": self.n,
            "delta": self.delta,
            "pivot": self.pivot,
            "alpha": self.alpha,
            "frozen": self.frozen,
            "frozen_penalty": self.frozen_penalty,
        }

    def load_metadata(self, meta: Dict[str, object]) -> None:
        if int(meta["n"]) != self.n:
            raise ValueError(f"mask {self.path}: stored width {meta['n']} differs from {self.n}")
        self.delta = float(meta["delta"])
        self.pivot = float(meta["pivot"])
        self.alpha = float(meta["alpha"])
        self.frozen = bool(meta["frozen"])
        self.frozen_penalty = float(meta["frozen_penalty"])

    def forward(self, x: Tensor) -> Tensor:
        return mask_forward(x, self)


def mask_values(state: MaskState) -> Tensor:
    if state.frozen:
        return Tensor(state.m_star.data)
    return ops.sigmoid(ops.mul(state.weight, state.delta))


def mask_forward(x: Tensor, state: MaskState) -> Tensor:
    if x.ndim != 4 or x.shape[1] != state.n:
        raise ShapeError(f"{state.path or 'mask'}: input channels {x.shape[1] if x.ndim > 1 else None} "
                         f"do not match mask width {state.n}")
    values = mask_values(state)
    return ops.mul(x, ops.reshape(values, (1, state.n, 1, 1)))


def mask_regularizer(state: MaskState) -> Tensor:
    """Sum of |w_i + 1|; a frozen mask contributes its value at freeze time as a constant."""
    if state.frozen:
        return Tensor(np.asarray(state.frozen_penalty, dtype=state.weight.dtype))
    return ops.sum(ops.abs(ops.add(state.weight, 1.0)))


def binarization_rule(values: np.ndarray, pivot: float, alpha: float) -> Tuple[float, Optional[np.ndarray]]:
    """
    Decide whether a soft mask snaps to 0/1.

    Args:
        values: Soft mask values m_i
        pivot: Threshold at or below which a channel counts as pruned
        alpha: Compression ratio threshold

    Returns:
        tuple: (ratio, binary values or None when ratio <= alpha)
    """
    values = np.asarray(values)
    if values.size == 0:
        return 0.0, None
    below = values <= pivot
    ratio = np.count_nonzero(below) / values.size
    if ratio <= alpha:
        return ratio, None
    return ratio, np.where(below, 0.0, 1.0)


def binarize_check(state: MaskState) -> MaskState:
    """
    Apply the binarization trick to one mask.

    With c the number of m_i at or below the pivot and ratio = c / n, a ratio
    above alpha sets m*_i = 1 where m_i > pivot and 0 elsewhere, then freezes
    the mask. Frozen masks are returned unchanged.
    """
    if state.frozen:
        return state
    ratio, binary = binarization_rule(state.soft_values(), state.pivot, state.alpha)
    if binary is None:
        return state
    state.m_star.data = binary.astype(state.m_star.dtype)
    state.frozen_penalty = float(np.abs(state.weight.data.astype(np.float64) + 1.0).sum())
    state.frozen = True
    logger.info(f"mask {state.path or '<unnamed>'} frozen: ratio {ratio:.3f} > alpha {state.alpha:.3f}, "
                f"{int(state.m_star.data.sum())}/{state.n} channels kept")
    return state


def active_channels(state: MaskState) -> List[int]:
    if not state.frozen:
        raise BinarizationIncompleteError(
            f"cannot enumerate survivors before binarization ({state.path or 'mask'})")
    return [int(i) for i in np.flatnonzero(state.m_star.data > 0.5)]
