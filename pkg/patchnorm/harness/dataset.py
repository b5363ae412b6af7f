"""
Procedural clean-domain dataset: eight shape classes over textured backgrounds.
Sample i depends only on (seed, i); labels cycle through the classes so every split is balanced.
"""
import logging
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..config import get_settings
from ..errors import ConfigurationError

logger = logging.getLogger(__name__)

SHAPE_CLASSES = ("circle", "square", "triangle", "cross", "ring", "diamond", "hbar", "vbar")


class DataConfig(BaseModel):
    """Sizes and seed of the synthetic train/test splits"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n_train: int = Field(2048, ge=1)
    n_test: int = Field(512, ge=1)
    seed: int = Field(0, description="Training split seed; the test split uses seed + 1")
    image_size: int = Field(16, ge=8)
    classes: int = Field(8, ge=2, le=len(SHAPE_CLASSES))

    @property
    def test_seed(self) -> int:
        return self.seed + 1


@dataclass(frozen=True)
class SyntheticDataset:
    images: np.ndarray  # (N, 3, S, S) in [0, 1]
    labels: np.ndarray  # (N,) int64
    seed: int
    classes: int

    def __len__(self) -> int:
        return len(self.labels)

    def batches(self, batch_size: int, rng: Optional[np.random.Generator] = None) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield (images, labels) batches, shuffled when rng is given"""
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            yield self.images[idx], self.labels[idx]


def _shape_mask(label: int, dx: np.ndarray, dy: np.ndarray, r: float) -> np.ndarray:
    dist = np.sqrt(dx * dx + dy * dy)
    bar = r / 3
    name = SHAPE_CLASSES[label]
    if name == "circle":
        return dist <= r
    if name == "square":
        return np.maximum(np.abs(dx), np.abs(dy)) <= 0.8 * r
    if name == "triangle":
        return (np.abs(dy) <= r) & (np.abs(dx) <= (dy + r) / 2)
    if name == "cross":
        return ((np.abs(dx) <= bar) & (np.abs(dy) <= r)) | ((np.abs(dy) <= bar) & (np.abs(dx) <= r))
    if name == "ring":
        return (dist <= r) & (dist >= 0.55 * r)
    if name == "diamond":
        return np.abs(dx) + np.abs(dy) <= r
    if name == "hbar":
        return (np.abs(dy) <= bar) & (np.abs(dx) <= r)
    return (np.abs(dx) <= bar) & (np.abs(dy) <= r)


def render_sample(seed: int, index: int, size: int = 16, classes: int = 8) -> tuple[np.ndarray, int]:
    """
    Draw one image deterministically from (seed, index).

    Returns:
        (image of shape (3, size, size) in [0, 1], label)
    """
    label = index % classes
    rng = np.random.default_rng([seed, index])

    coords = (np.arange(size) + 0.5) / size * 2 - 1
    yy, xx = np.meshgrid(coords, coords, indexing="ij")

    background = rng.uniform(0.2, 0.8, size=3)
    angle = rng.uniform(0, np.pi)
    frequency = rng.uniform(2.0, 6.0)
    phase = rng.uniform(0, 2 * np.pi)
    amplitude = rng.uniform(0.05, 0.15)
    texture = amplitude * np.sin(frequency * np.pi * (np.cos(angle) * xx + np.sin(angle) * yy) + phase)

    foreground = rng.uniform(0.0, 1.0, size=3)
    if np.abs(foreground - background).mean() < 0.3:
        foreground = 1.0 - background

    cx, cy = rng.uniform(-0.3, 0.3, size=2)
    radius = rng.uniform(0.4, 0.65)
    mask = _shape_mask(label, xx - cx, yy - cy, radius)

    image = np.where(mask[None], foreground[:, None, None], background[:, None, None] + texture[None])
    image = image + rng.normal(0.0, 0.02, size=image.shape)
    return np.clip(image, 0.0, 1.0), label


def generate_dataset(
    seed: int, n: int, size: int = 16, classes: int = 8, dtype: Optional[np.dtype] = None
) -> SyntheticDataset:
    """
    Build n samples from seed.

    Args:
        seed: Dataset seed
        n: Number of samples (at least one per class)
        size: Image height and width
        classes: Number of shape classes (at most 8)
        dtype: Image dtype; configured precision when omitted

    Returns:
        SyntheticDataset
    """
    if classes < 2 or classes > len(SHAPE_CLASSES):
        raise ConfigurationError(f"classes must be in [2, {len(SHAPE_CLASSES)}], got {classes}")
    if n < classes:
        raise ConfigurationError(f"Need at least {classes} samples for {classes} classes, got {n}")

    dtype = dtype or get_settings().dtype
    images = np.empty((n, 3, size, size), dtype=dtype)
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        images[i], labels[i] = render_sample(seed, i, size, classes)

    logger.info(f"Generated {n} synthetic images (seed={seed}, {classes} classes, {size}x{size})")
    return SyntheticDataset(images, labels, seed, classes)


def dataset_from_config(data: DataConfig, split: str = "train", dtype: Optional[np.dtype] = None) -> SyntheticDataset:
    if split == "train":
        return generate_dataset(data.seed, data.n_train, data.image_size, data.classes, dtype)
    if split == "test":
        return generate_dataset(data.test_seed, data.n_test, data.image_size, data.classes, dtype)
    raise ConfigurationError(f"Unknown split '{split}'")
