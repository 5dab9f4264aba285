"""
Spectral normalization by persistent power iteration.
"""
import numpy as np

from engine import Tensor, ops
from layers.module import Module
from utils.logging import logger

SIGMA_FLOOR = 1e-12


def _unit(vec: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm < SIGMA_FLOOR:
        return fallback
    return vec / norm


class SpectralNormState(Module):
    """Left/right singular-vector estimates for one weight."""

    def __init__(self, out_dim: int, rest_dim: int, rng: np.random.Generator,
                 n_power_iterations: int = 1, dtype=np.float32):
        super().__init__()
        self.n_power_iterations = n_power_iterations
        u = rng.standard_normal(max(out_dim, 1))[:out_dim]
        v = rng.standard_normal(max(rest_dim, 1))[:rest_dim]
        self.register_buffer("u", Tensor(_unit(u, u).astype(dtype)))
        self.register_buffer("v", Tensor(_unit(v, v).astype(dtype)))
        self.sigma = float("nan")


def spectral_normalize(weight: Tensor, state: SpectralNormState, update: bool = True) -> Tensor:
    """
    Divide ``weight`` by its estimated top singular value.

    Args:
        weight: Weight of any rank; flattened to (out, rest)
        state: Persistent power-iteration vectors
        update: Run ``state.n_power_iterations`` power-iteration steps first

    Returns:
        Tensor: weight / sigma, recorded on the tape through sigma
    """
    out_dim = weight.shape[0]
    matrix = weight.data.reshape(out_dim, -1)
    u, v = state.u.data, state.v.data
    if update:
        for _ in range(state.n_power_iterations):
            v = _unit(matrix.T @ u, v)
            u = _unit(matrix @ v, u)
        state.u.data = u.astype(state.u.dtype)
        state.v.data = v.astype(state.v.dtype)

    flat = ops.reshape(weight, (out_dim, -1))
    wv = ops.matmul(flat, Tensor(v.reshape(-1, 1).astype(weight.dtype)))
    sigma = ops.sum(ops.mul(wv, Tensor(u.reshape(-1, 1).astype(weight.dtype))))
    state.sigma = sigma.item()
    if state.sigma < SIGMA_FLOOR:
        logger.warning(f"spectral norm of {state.path or 'weight'} below {SIGMA_FLOOR}; clamping")
    return ops.div(weight, ops.clamp_min(sigma, SIGMA_FLOOR))
