"""
Normalization with statistics blended against accumulated statistics.

For a set of values x with mean mu and std sigma = sqrt(var + eps):
    mu_b    = lam * mu    + (1 - lam) * mu_hat
    sigma_b = lam * sigma + (1 - lam) * sigma_hat
    x_hat   = (x - mu_b) / sigma_b
mu_hat and sigma_hat are constants for differentiation. lam = 1 is plain batch/patch
normalization, lam = 0 is normalization with accumulated statistics only.
"""
import logging
from dataclasses import dataclass
from typing import Union

import numpy as np

from ..errors import DimensionError, UsageError
from ..tensor import Function, Tensor

logger = logging.getLogger(__name__)

Scalar = Union[float, np.ndarray]


@dataclass
class BlendCache:
    centered: np.ndarray
    sigma: np.ndarray
    sigma_b: np.ndarray
    x_hat: np.ndarray
    lam: float
    axes: tuple[int, ...]


def blended_normalize(
    x: np.ndarray, axes: tuple[int, ...], mu_hat: Scalar, sigma_hat: Scalar, lam: float, eps: float
) -> tuple[np.ndarray, BlendCache]:
    """
    Normalize x over axes with blended statistics.

    Args:
        x: Values to normalize
        axes: Reduction axes (statistics keep dims)
        mu_hat: Accumulated mean, broadcastable to the reduced shape
        sigma_hat: Accumulated std, broadcastable to the reduced shape
        lam: Weight of the statistics computed from x
        eps: Constant inside the square root

    Returns:
        (x_hat, cache for blended_normalize_backward)
    """
    mu = x.mean(axis=axes, keepdims=True)
    centered = x - mu
    sigma = np.sqrt((centered * centered).mean(axis=axes, keepdims=True) + eps)
    mu_b = lam * mu + (1.0 - lam) * mu_hat
    sigma_b = lam * sigma + (1.0 - lam) * sigma_hat
    x_hat = (x - mu_b) / sigma_b
    return x_hat, BlendCache(centered, sigma, sigma_b, x_hat, lam, axes)


def blended_normalize_backward(grad_x_hat: np.ndarray, cache: BlendCache) -> np.ndarray:
    """Gradient with respect to x given the gradient with respect to x_hat"""
    lam, axes = cache.lam, cache.axes
    mean_g = grad_x_hat.mean(axis=axes, keepdims=True)
    mean_gx = (grad_x_hat * cache.x_hat).mean(axis=axes, keepdims=True)
    return (grad_x_hat - lam * mean_g - lam * cache.centered / cache.sigma * mean_gx) / cache.sigma_b


@dataclass(frozen=True)
class Region:
    """A set of channels normalized together over a set of pixel positions"""
    channels: np.ndarray
    pixels: np.ndarray
    patch_count: int = 1


@dataclass(frozen=True)
class NormPlan:
    """Everything a batch-statistic forward pass decided: regions and frozen constants"""
    regions: tuple[Region, ...]
    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    lam: float
    eps: float

    @classmethod
    def whole(cls, channels: int, pixels: int, mu_hat, sigma_hat, lam: float, eps: float) -> "NormPlan":
        """Single region covering every channel and pixel"""
        region = Region(np.arange(channels), np.arange(pixels), 1)
        return cls((region,), np.array(mu_hat, copy=True), np.array(sigma_hat, copy=True), lam, eps)

    def apply(self, x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
        """Normalize x region by region and apply the shared affine transform"""
        return RegionNormalize.apply(x, gamma, beta, plan=self)


def _check_affine(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray):
    channels = x.shape[1]
    for name, value in (("gamma", gamma), ("beta", beta)):
        if value.shape != (1, channels, 1, 1):
            raise DimensionError(f"{name} shape {value.shape} does not match {channels} channels")


class RegionNormalize(Function):
    """gamma * x_hat + beta with x_hat computed independently inside each plan region"""

    def forward(self, x, gamma, beta, plan: NormPlan = None):
        _check_affine(x, gamma, beta)
        N, C, H, W = x.shape
        flat = x.reshape(N, C, H * W)
        x_hat = np.empty_like(flat)
        mu_hat = np.asarray(plan.mu_hat, dtype=x.dtype)
        sigma_hat = np.asarray(plan.sigma_hat, dtype=x.dtype)
        batch = np.arange(N)

        self.caches = []
        for region in plan.regions:
            index = np.ix_(batch, region.channels, region.pixels)
            values, cache = blended_normalize(
                flat[index],
                axes=(0, 2),
                mu_hat=mu_hat[region.channels][None, :, None],
                sigma_hat=sigma_hat[region.channels][None, :, None],
                lam=plan.lam,
                eps=plan.eps,
            )
            x_hat[index] = values
            self.caches.append((index, cache))

        self.x_hat = x_hat.reshape(x.shape)
        self.gamma = gamma
        return gamma * self.x_hat + beta

    def backward(self, grad):
        if not hasattr(self, "caches"):
            raise UsageError("backward called before forward")
        grad_beta = grad.sum(axis=(0, 2, 3), keepdims=True)
        grad_gamma = (grad * self.x_hat).sum(axis=(0, 2, 3), keepdims=True)

        N, C, H, W = grad.shape
        grad_x_hat = (grad * self.gamma).reshape(N, C, H * W)
        grad_x = np.empty_like(grad_x_hat)
        for index, cache in self.caches:
            grad_x[index] = blended_normalize_backward(grad_x_hat[index], cache)
        return grad_x.reshape(grad.shape), grad_gamma, grad_beta


class SampleGroupNormalize(Function):
    """Per-sample normalization over channel groups (IN: groups=C, LN: groups=1)"""

    def forward(self, x, gamma, beta, groups: int = 1, eps: float = 1e-5):
        _check_affine(x, gamma, beta)
        N = x.shape[0]
        grouped = x.reshape(N, groups, -1)
        x_hat, self.cache = blended_normalize(grouped, axes=(2,), mu_hat=0.0, sigma_hat=1.0, lam=1.0, eps=eps)
        self.x_hat = x_hat.reshape(x.shape)
        self.gamma = gamma
        self.groups = groups
        return gamma * self.x_hat + beta

    def backward(self, grad):
        if not hasattr(self, "cache"):
            raise UsageError("backward called before forward")
        grad_beta = grad.sum(axis=(0, 2, 3), keepdims=True)
        grad_gamma = (grad * self.x_hat).sum(axis=(0, 2, 3), keepdims=True)
        grad_x_hat = (grad * self.gamma).reshape(grad.shape[0], self.groups, -1)
        grad_x = blended_normalize_backward(grad_x_hat, self.cache)
        return grad_x.reshape(grad.shape), grad_gamma, grad_beta
