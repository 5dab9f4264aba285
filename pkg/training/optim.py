"""
Adam with bias correction and the stepped learning-rate schedule.
"""
from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from engine import Parameter, ShapeError
from training.config import TrainConfig


class NonFiniteGradientError(FloatingPointError):
    """Raised when a gradient contains NaN or infinity."""

    def __init__(self, name: str):
        super().__init__(f"non-finite gradient for parameter {name}")
        self.name = name


@dataclass
class OptimState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: Mapping[str, Parameter], grads: Mapping[str, np.ndarray], state: OptimState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> OptimState:
    """
    Apply one Adam update in place.

    Every gradient is validated before any parameter changes, so a bad
    gradient leaves both the parameters and ``state`` untouched.

    Args:
        params: Named parameters to update
        grads: Gradient for each name in ``params``
        state: Moment accumulators keyed by parameter name
        lr: Learning rate

    Returns:
        OptimState: ``state``, advanced by one step
    """
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name)

    state.step += 1
    t = state.step
    correction1 = 1 - beta1 ** t
    correction2 = 1 - beta2 ** t
    for name, p in params.items():
        g = grads[name].astype(p.dtype, copy=False)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None or m.shape != p.shape:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * (g * g)
        state.m[name] = m.astype(p.dtype, copy=False)
        state.v[name] = v.astype(p.dtype, copy=False)
        m_hat = m / correction1
        v_hat = v / correction2
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype, copy=False)
    return state


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """base_lr divided by lr_drop_factor once per drop epoch at or before ``epoch``."""
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    drops = sum(1 for e in cfg.lr_drop_epochs if e <= epoch)
    return cfg.base_lr / cfg.lr_drop_factor ** drops
