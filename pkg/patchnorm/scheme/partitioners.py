"""
Patch (rectangle) and pixel-group partitioners.
"""
import logging

import numpy as np

from .base_partitioner import BasePartitioner
from .grid import Orientation, SplitMode, generate_grid
from .pixels import generate_pixel_groups
from .scheme_config import SchemeConfig

logger = logging.getLogger(__name__)


class PatchPartitioner(BasePartitioner):
    """Axis-aligned rectangular patches"""

    name = "patch"

    def __init__(self, split_mode: SplitMode = "random", orientation: Orientation = "auto"):
        self.split_mode = split_mode
        self.orientation = orientation

    @classmethod
    def from_config(cls, cfg: SchemeConfig) -> "PatchPartitioner":
        return cls(cfg.split_mode, cfg.orientation)

    def partition(self, height, width, patch_count, rng):
        grid = generate_grid(height, width, patch_count, self.split_mode, rng, self.orientation)
        return [rect.pixel_indices(width) for rect in grid.rects]


class PixelPartitioner(BasePartitioner):
    """Random pixel groups with patch-grid sizes and no spatial structure"""

    name = "pixel"

    def partition(self, height, width, patch_count, rng):
        grouping = generate_pixel_groups(height, width, patch_count, rng)
        return [grouping.pixel_indices(g) for g in range(grouping.group_count)]
