"""
Synthetic corruption suite: five kinds x five severities.
Each kind has a strength parameter per severity; strength 0 is the identity.
"""
import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..errors import ConfigurationError

logger = logging.getLogger(__name__)

CORRUPTION_KINDS = ("gaussian_noise", "blur3x3", "contrast_scale", "brightness_shift", "pixel_dropout")
SEVERITY_LEVELS = (1, 2, 3, 4, 5)

# Strength per severity 1..5 (strictly increasing):
#   gaussian_noise    noise std
#   blur3x3           number of 3x3 box-blur passes
#   contrast_scale    1 - contrast factor around the image mean
#   brightness_shift  additive offset
#   pixel_dropout     probability a pixel (all channels) is zeroed
SEVERITY_PARAMS: dict[str, tuple[float, ...]] = {
    "gaussian_noise": (0.06, 0.12, 0.18, 0.26, 0.36),
    "blur3x3": (1, 2, 3, 5, 8),
    "contrast_scale": (0.3, 0.45, 0.6, 0.75, 0.85),
    "brightness_shift": (0.15, 0.25, 0.35, 0.45, 0.6),
    "pixel_dropout": (0.1, 0.2, 0.3, 0.4, 0.55),
}


def severity_parameter(kind: str, severity: int) -> float:
    if kind not in SEVERITY_PARAMS:
        raise ConfigurationError(f"Unknown corruption kind: {kind}")
    if severity not in SEVERITY_LEVELS:
        raise ConfigurationError(f"Invalid severity level: {severity}. Must be in {list(SEVERITY_LEVELS)}")
    return SEVERITY_PARAMS[kind][severity - 1]


def _box_blur(images: np.ndarray, passes: int) -> np.ndarray:
    out = images
    for _ in range(passes):
        padded = np.pad(out, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="edge")
        out = sliding_window_view(padded, (3, 3), axis=(2, 3)).mean(axis=(-2, -1))
    return out


def apply_corruption(images: np.ndarray, kind: str, strength: float, rng: np.random.Generator) -> np.ndarray:
    """
    Corrupt a batch of images with an explicit strength.

    Args:
        images: (N, 3, H, W) values in [0, 1]
        kind: One of CORRUPTION_KINDS
        strength: Kind-specific parameter; 0 leaves images unchanged
        rng: Generator for stochastic kinds

    Returns:
        New array clipped to [0, 1]; the input is never modified
    """
    if kind not in SEVERITY_PARAMS:
        raise ConfigurationError(f"Unknown corruption kind: {kind}")
    if strength == 0:
        return images.copy()

    if kind == "gaussian_noise":
        out = images + rng.normal(0.0, strength, size=images.shape)
    elif kind == "blur3x3":
        out = _box_blur(images, int(strength))
    elif kind == "contrast_scale":
        mean = images.mean(axis=(1, 2, 3), keepdims=True)
        out = mean + (images - mean) * (1.0 - strength)
    elif kind == "brightness_shift":
        out = images + strength
    else:
        keep = rng.random(size=(images.shape[0], 1, images.shape[2], images.shape[3])) >= strength
        out = images * keep

    return np.clip(out, 0.0, 1.0).astype(images.dtype)


def corrupt(images: np.ndarray, kind: str, severity: int, rng: np.random.Generator) -> np.ndarray:
    """Corrupt images at a severity level 1..5"""
    return apply_corruption(images, kind, severity_parameter(kind, severity), rng)


class DomainSuite(BaseModel):
    """Corruption kinds x severities used as unseen evaluation domains"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kinds: list[str] = Field(list(CORRUPTION_KINDS), description="Corruption kinds to evaluate")
    severities: list[int] = Field(list(SEVERITY_LEVELS), description="Severity levels to evaluate")
    rng_seed: int = Field(0, description="Seed for stochastic corruptions")

    @field_validator("kinds")
    @classmethod
    def _check_kinds(cls, value: list[str]) -> list[str]:
        unknown = [k for k in value if k not in CORRUPTION_KINDS]
        if unknown:
            raise ValueError(f"unknown corruption kinds {unknown}")
        return value

    @field_validator("severities")
    @classmethod
    def _check_severities(cls, value: list[int]) -> list[int]:
        bad = [s for s in value if s not in SEVERITY_LEVELS]
        if bad:
            raise ValueError(f"severities {bad} not in {list(SEVERITY_LEVELS)}")
        return sorted(set(value))

    def cells(self) -> list[tuple[str, int]]:
        return [(kind, severity) for kind in self.kinds for severity in self.severities]

    def cell_rng(self, kind: str, severity: int) -> np.random.Generator:
        """Independent generator per (kind, severity) so cells do not depend on evaluation order"""
        return np.random.default_rng([self.rng_seed, CORRUPTION_KINDS.index(kind), severity])

    def corrupt_cell(self, images: np.ndarray, kind: str, severity: int) -> np.ndarray:
        return corrupt(images, kind, severity, self.cell_rng(kind, severity))
