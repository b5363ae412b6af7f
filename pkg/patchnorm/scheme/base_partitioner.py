"""
Abstract base class for spatial partitioners.
A partitioner turns (H, W, P) into disjoint sets of flat pixel indices.
"""
from abc import ABC, abstractmethod

import numpy as np


class BasePartitioner(ABC):
    """Abstract base class for spatial partitioners"""

    name: str = ""

    @abstractmethod
    def partition(self, height: int, width: int, patch_count: int, rng: np.random.Generator) -> list[np.ndarray]:
        """
        Split the H x W plane.

        Args:
            height: H
            width: W
            patch_count: Requested number of parts
            rng: Random generator for every draw

        Returns:
            List of ascending flat pixel-index arrays that together cover the plane exactly once
        """
        pass
