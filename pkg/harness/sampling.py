"""
Sample generation, latent and class interpolation, and PNG grids.
"""
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image

from engine import no_record
from models.generator import Generator, generator_forward
from utils.logging import logger


def generate(gen: Generator, z: np.ndarray, cls) -> np.ndarray:
    """Eval-mode images (B, 3, S, S) in [-1, 1]; the generator's mode is restored afterwards."""
    was_training = gen.training
    gen.eval()
    try:
        with no_record():
            image, _ = generator_forward(gen, np.asarray(z, dtype=gen.stem.weight.dtype), cls)
    finally:
        gen.train(was_training)
    return image.data


def sample_noise(rng: np.random.Generator, count: int, z_dim: int, dtype=np.float32) -> np.ndarray:
    return rng.standard_normal((count, z_dim)).astype(dtype)


def interpolate_z(gen: Generator, z0: np.ndarray, z1: np.ndarray, label: int, steps: int) -> np.ndarray:
    """Fixed class, noise moving linearly from z0 to z1 in ``steps`` images."""
    if steps < 2:
        raise ValueError(f"interpolation needs at least 2 steps, got {steps}")
    t = np.linspace(0.0, 1.0, steps)[:, None]
    z = (1 - t) * np.asarray(z0)[None, :] + t * np.asarray(z1)[None, :]
    return generate(gen, z, np.full(steps, label, dtype=np.int64))


def interpolate_class(gen: Generator, z: np.ndarray, class0: int, class1: int, steps: int) -> np.ndarray:
    """Fixed noise, class condition a convex mix of two embedding rows."""
    if steps < 2:
        raise ValueError(f"interpolation needs at least 2 steps, got {steps}")
    k = gen.cfg.num_classes
    for c in (class0, class1):
        if not 0 <= c < k:
            raise ValueError(f"class {c} outside [0, {k})")
    t = np.linspace(0.0, 1.0, steps)
    weights = np.zeros((steps, k), dtype=gen.stem.weight.dtype)
    weights[:, class0] += 1 - t
    weights[:, class1] += t
    zs = np.repeat(np.asarray(z)[None, :], steps, axis=0)
    return generate(gen, zs, weights)


def to_uint8(images: np.ndarray) -> np.ndarray:
    """Map [-1, 1] images of shape (B, 3, H, W) to uint8 HWC."""
    scaled = np.clip((np.asarray(images, dtype=np.float64) + 1.0) * 127.5, 0, 255)
    return np.round(scaled).astype(np.uint8).transpose(0, 2, 3, 1)


def make_grid(images: np.ndarray, nrow: Optional[int] = None, padding: int = 1) -> np.ndarray:
    """Tile (B, 3, H, W) images into one uint8 (rows*H, cols*W, 3) array."""
    tiles = to_uint8(images)
    count, h, w, _ = tiles.shape
    if count == 0:
        raise ValueError("cannot build a grid from zero images")
    cols = nrow or int(np.ceil(np.sqrt(count)))
    rows = int(np.ceil(count / cols))
    grid = np.zeros((rows * (h + padding) + padding, cols * (w + padding) + padding, 3), dtype=np.uint8)
    for i, tile in enumerate(tiles):
        r, c = divmod(i, cols)
        top = padding + r * (h + padding)
        left = padding + c * (w + padding)
        grid[top:top + h, left:left + w] = tile
    return grid


def save_grid(images: np.ndarray, path: Union[str, Path], nrow: Optional[int] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(make_grid(images, nrow)).save(path, format="PNG")
    logger.debug(f"wrote {len(images)} images to {path}")
    return path
