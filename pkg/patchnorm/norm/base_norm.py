"""
Abstract base class for normalization layers.
Defines the interface every layer in the harness model implements.
"""
from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from .functional import pbn_backward
from .state import NormState
from ..tensor import Tensor


class BaseNorm(ABC):
    """Abstract base class for normalization layers"""

    kind: str = ""
    # Whether the layer keeps accumulated batch statistics (BN family)
    uses_batch_statistics: bool = False

    def __init__(self, state: NormState):
        self.state = state
        self.last_output: Optional[Tensor] = None

    @abstractmethod
    def forward(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        """
        Normalize a batch of feature maps.

        Args:
            x: Feature maps (N, C, H, W)
            rng: Generator for random layers; the layer's own generator when omitted

        Returns:
            Normalized feature maps, same shape as x
        """
        pass

    def __call__(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        out = self.forward(x, rng)
        self.last_output = out
        return out

    def backward(self, upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gradients for (x, gamma, beta) of the most recent call"""
        return pbn_backward(self.last_output, upstream)

    def parameters(self) -> list[Tensor]:
        return [self.state.gamma, self.state.beta]

    def train(self):
        self.state.train()

    def eval(self):
        self.state.eval()

    @property
    def training(self) -> bool:
        return self.state.training

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(channels={self.state.channels}, mode={self.state.mode})"
