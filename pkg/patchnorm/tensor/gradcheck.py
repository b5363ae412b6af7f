"""
Central finite-difference gradient checking.
"""
import logging
from typing import Callable

import numpy as np

from .tensor import Tensor

logger = logging.getLogger(__name__)


def numerical_gradient(loss_fn: Callable[[], float], tensor: Tensor, h: float = 1e-4) -> np.ndarray:
    """
    Central-difference gradient of loss_fn with respect to tensor.data.

    Args:
        loss_fn: Recomputes the loss from the current tensor values
        tensor: Tensor whose entries are perturbed in place and restored
        h: Step size

    Returns:
        Array shaped like tensor.data
    """
    flat = tensor.data.reshape(-1)
    grad = np.zeros(flat.shape, dtype=np.float64)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = loss_fn()
        flat[i] = original - h
        minus = loss_fn()
        flat[i] = original
        grad[i] = (plus - minus) / (2 * h)
    return grad.reshape(tensor.shape)


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(1, |n|) over all entries"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))
