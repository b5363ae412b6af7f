"""
Pixel-group partitioner for the ablation without spatial structure.
Group sizes come from a random patch grid; membership comes from a random permutation.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .grid import generate_grid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PixelGrouping:
    """Group id for every (h, w) position"""
    assignment: np.ndarray  # (H, W) int
    group_count: int

    @property
    def sizes(self) -> list[int]:
        return np.bincount(self.assignment.reshape(-1), minlength=self.group_count).tolist()

    def pixel_indices(self, group: int) -> np.ndarray:
        """Flat indices of the pixels in one group, ascending"""
        return np.flatnonzero(self.assignment.reshape(-1) == group)


def generate_pixel_groups(height: int, width: int, patch_count: int, rng: np.random.Generator) -> PixelGrouping:
    """
    Split the H x W positions into groups sized like a random patch grid.

    Args:
        height: H
        width: W
        patch_count: Requested P
        rng: Random generator (the grid draw happens first, then the permutation)

    Returns:
        PixelGrouping whose sizes equal the rect areas of the paired grid draw
    """
    grid = generate_grid(height, width, patch_count, "random", rng)
    sizes = [rect.area for rect in grid.rects]

    labels = np.repeat(np.arange(len(sizes)), sizes)
    assignment = np.empty(height * width, dtype=np.int64)
    assignment[rng.permutation(height * width)] = labels
    return PixelGrouping(assignment.reshape(height, width), len(sizes))
