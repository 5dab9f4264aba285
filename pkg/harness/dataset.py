"""
Procedural shape-and-colour dataset standing in for natural images.

Class k draws shape ``SHAPES[k % len(SHAPES)]`` in colour
``COLORS[(k // len(SHAPES)) % len(COLORS)]`` on a dark background, with
position and scale jitter taken from the seeded stream.
"""
from pathlib import Path
from typing import Iterator, NamedTuple, Optional, Union

import numpy as np

from utils.logging import logger

SHAPES = ("square", "disc", "triangle", "cross")
COLORS = (
    (1.0, -0.6, -0.6),
    (-0.6, 1.0, -0.6),
    (-0.6, -0.6, 1.0),
    (1.0, 1.0, -0.6),
)
BACKGROUND = -0.8
SUPPORTED_SIZES = (16, 32)


class Batch(NamedTuple):
    images: np.ndarray
    labels: np.ndarray


class SyntheticDataset(NamedTuple):
    images: np.ndarray   # (n, 3, S, S) in [-1, 1]
    labels: np.ndarray   # (n,) int64
    num_classes: int
    image_size: int
    seed: int

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def class_means(self) -> np.ndarray:
        return np.stack([self.images[self.labels == k].mean(axis=0) for k in range(self.num_classes)])

    def batch(self, indices: np.ndarray, dtype=np.float32) -> Batch:
        return Batch(self.images[indices].astype(dtype), self.labels[indices])


def _shape_mask(kind: str, size: int, cy: float, cx: float, radius: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    dy, dx = yy - cy, xx - cx
    if kind == "square":
        return (np.abs(dy) <= radius) & (np.abs(dx) <= radius)
    if kind == "disc":
        return dy * dy + dx * dx <= radius * radius
    if kind == "triangle":
        # apex up, base at cy + radius
        return (dy <= radius) & (dy >= -radius) & (np.abs(dx) <= (dy + radius) / 2)
    if kind == "cross":
        bar = radius / 3
        return ((np.abs(dy) <= bar) & (np.abs(dx) <= radius)) | ((np.abs(dx) <= bar) & (np.abs(dy) <= radius))
    raise ValueError(f"unknown shape: {kind}")


def render(label: int, size: int, rng: np.random.Generator) -> np.ndarray:
    kind = SHAPES[label % len(SHAPES)]
    color = COLORS[(label // len(SHAPES)) % len(COLORS)]
    radius = size * rng.uniform(0.22, 0.32)
    cy = size / 2 + rng.uniform(-0.12, 0.12) * size
    cx = size / 2 + rng.uniform(-0.12, 0.12) * size
    mask = _shape_mask(kind, size, cy, cx, radius)
    image = np.full((3, size, size), BACKGROUND, dtype=np.float32)
    for ch in range(3):
        image[ch][mask] = color[ch]
    return image


def synth_dataset(seed: int, num_classes: int, image_size: int, n_per_class: int) -> SyntheticDataset:
    """
    Build a deterministic dataset with exactly ``n_per_class`` images per class.

    Args:
        seed: Stream seed; identical seeds give byte-identical arrays
        num_classes: K >= 2, at most len(SHAPES) * len(COLORS)
        image_size: 16 or 32
        n_per_class: Images per class, >= 1
    """
    if num_classes < 2 or num_classes > len(SHAPES) * len(COLORS):
        raise ValueError(f"num_classes must lie in [2, {len(SHAPES) * len(COLORS)}], got {num_classes}")
    if image_size not in SUPPORTED_SIZES:
        raise ValueError(f"image_size must be one of {SUPPORTED_SIZES}, got {image_size}")
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), n_per_class)
    images = np.stack([render(int(k), image_size, rng) for k in labels])
    logger.info(f"synthesized {len(labels)} images: {num_classes} classes at {image_size}x{image_size}, seed {seed}")
    return SyntheticDataset(images, labels, num_classes, image_size, seed)


def save_dataset(dataset: SyntheticDataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.savez(f, images=dataset.images, labels=dataset.labels,
                 meta=np.array([dataset.num_classes, dataset.image_size, dataset.seed], dtype=np.int64))
    return path


def load_dataset(path: Union[str, Path]) -> SyntheticDataset:
    with np.load(path) as data:
        num_classes, image_size, seed = (int(v) for v in data["meta"])
        images = data["images"].astype(np.float32)
        labels = data["labels"].astype(np.int64)
    if len(labels) == 0:
        raise ValueError(f"{path}: dataset is empty")
    return SyntheticDataset(images, labels, num_classes, image_size, seed)


def iterate_batches(dataset: SyntheticDataset, batch_size: int, steps: int, rng: np.random.Generator,
                    dtype=np.float32) -> Iterator[Batch]:
    """``steps`` batches from one seeded permutation, wrapping around when the dataset is short."""
    n = len(dataset)
    if n == 0:
        raise ValueError("dataset is empty")
    order = rng.permutation(n)
    for s in range(steps):
        idx = order[(s * batch_size + np.arange(batch_size)) % n]
        yield dataset.batch(idx, dtype)


def resolve_dataset(path: Optional[Union[str, Path]], seed: int, num_classes: int, image_size: int,
                    n_per_class: int) -> SyntheticDataset:
    if path is not None:
        dataset = load_dataset(path)
        if dataset.num_classes != num_classes or dataset.image_size != image_size:
            raise ValueError(f"{path}: dataset has {dataset.num_classes} classes at {dataset.image_size}px, "
                             f"config expects {num_classes} at {image_size}px")
        return dataset
    return synth_dataset(seed, num_classes, image_size, n_per_class)
