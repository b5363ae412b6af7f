"""
Per-layer normalization state: affine parameters, accumulated statistics and mode.
"""
import logging
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from ..errors import ConfigurationError, DimensionError, LoadError
from ..tensor import Tensor

logger = logging.getLogger(__name__)

# Field names of the flat checkpoint record (values stored as little-endian float64)
RECORD_FIELDS = ("gamma", "beta", "running_mean", "running_std", "momentum", "eps")
RECORD_DTYPE = np.dtype("<f8")


@dataclass
class NormState:
    """Learnable gamma/beta plus accumulated mean/std (never differentiated)"""
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_std: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5
    mode: Literal["train", "eval"] = "train"

    @classmethod
    def create(
        cls, channels: int, momentum: float = 0.1, eps: float = 1e-5, dtype: Optional[np.dtype] = None
    ) -> "NormState":
        """gamma=1, beta=0, running mean 0, running std 1"""
        if channels < 1:
            raise DimensionError(f"Need at least one channel, got {channels}")
        state = cls(
            gamma=Tensor.vector(np.ones(channels), requires_grad=True, dtype=dtype),
            beta=Tensor.vector(np.zeros(channels), requires_grad=True, dtype=dtype),
            running_mean=np.zeros(channels, dtype=np.float64),
            running_std=np.ones(channels, dtype=np.float64),
            momentum=momentum,
            eps=eps,
        )
        state.validate()
        return state

    @property
    def channels(self) -> int:
        return self.gamma.shape[1]

    @property
    def training(self) -> bool:
        return self.mode == "train"

    def train(self):
        self.mode = "train"

    def eval(self):
        self.mode = "eval"

    def validate(self):
        """Raise ConfigurationError unless eps > 0, 0 < momentum < 1 and running std > 0"""
        if not self.eps > 0:
            raise ConfigurationError(f"eps must be > 0, got {self.eps}")
        if not 0 < self.momentum < 1:
            raise ConfigurationError(f"momentum must be in (0, 1), got {self.momentum}")
        if self.running_mean.shape != (self.channels,) or self.running_std.shape != (self.channels,):
            raise DimensionError("running statistics do not match the channel count")
        if not np.all(self.running_std > 0):
            raise ConfigurationError("running std must be strictly positive")

    def check_input(self, x: Tensor):
        if x.shape[1] != self.channels:
            raise DimensionError(f"Input has {x.shape[1]} channels, layer expects {self.channels}")

    def update_running(self, mean: np.ndarray, std: np.ndarray):
        """Exponential moving average with momentum m"""
        m = self.momentum
        self.running_mean = (1.0 - m) * self.running_mean + m * np.asarray(mean, dtype=np.float64)
        self.running_std = (1.0 - m) * self.running_std + m * np.asarray(std, dtype=np.float64)

    def to_record(self, prefix: str = "") -> dict[str, np.ndarray]:
        """Flat key -> little-endian float64 array mapping"""
        values = {
            "gamma": self.gamma.data.reshape(-1),
            "beta": self.beta.data.reshape(-1),
            "running_mean": self.running_mean,
            "running_std": self.running_std,
            "momentum": np.array([self.momentum]),
            "eps": np.array([self.eps]),
        }
        return {f"{prefix}{key}": np.asarray(values[key], dtype=RECORD_DTYPE) for key in RECORD_FIELDS}

    @classmethod
    def from_record(
        cls, record: dict[str, np.ndarray], prefix: str = "", dtype: Optional[np.dtype] = None
    ) -> "NormState":
        """
        Rebuild a state from a flat record.

        Args:
            record: Mapping produced by to_record (possibly holding other layers' keys too)
            prefix: Key prefix of this layer
            dtype: Dtype for gamma/beta

        Returns:
            NormState in eval mode
        """
        missing = [f"{prefix}{key}" for key in RECORD_FIELDS if f"{prefix}{key}" not in record]
        if missing:
            raise LoadError(f"Checkpoint record is missing {missing}")

        gamma = np.asarray(record[f"{prefix}gamma"], dtype=np.float64).reshape(-1)
        channels = gamma.size
        for key in ("beta", "running_mean", "running_std"):
            if np.asarray(record[f"{prefix}{key}"]).size != channels:
                raise LoadError(f"{prefix}{key} has {np.asarray(record[prefix + key]).size} entries, expected {channels}")

        state = cls(
            gamma=Tensor.vector(gamma, requires_grad=True, dtype=dtype),
            beta=Tensor.vector(record[f"{prefix}beta"], requires_grad=True, dtype=dtype),
            running_mean=np.asarray(record[f"{prefix}running_mean"], dtype=np.float64).reshape(-1).copy(),
            running_std=np.asarray(record[f"{prefix}running_std"], dtype=np.float64).reshape(-1).copy(),
            momentum=float(np.asarray(record[f"{prefix}momentum"]).reshape(-1)[0]),
            eps=float(np.asarray(record[f"{prefix}eps"]).reshape(-1)[0]),
            mode="eval",
        )
        try:
            state.validate()
        except (ConfigurationError, DimensionError) as e:
            raise LoadError(f"Invalid normalization record {prefix!r}: {e}") from e
        return state

    def copy(self) -> "NormState":
        return NormState(
            gamma=Tensor(self.gamma.data.copy(), requires_grad=True),
            beta=Tensor(self.beta.data.copy(), requires_grad=True),
            running_mean=self.running_mean.copy(),
            running_std=self.running_std.copy(),
            momentum=self.momentum,
            eps=self.eps,
            mode=self.mode,
        )
