"""
Operations on rank-4 tensors.
Statistics helpers return plain per-channel vectors; everything else is recorded on the tape.
"""
import logging
from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Function, Tensor
from ..errors import ConfigurationError, DimensionError

logger = logging.getLogger(__name__)

TensorOrArray = Union[Tensor, np.ndarray]


def _as_array(f: TensorOrArray) -> np.ndarray:
    data = f.data if isinstance(f, Tensor) else np.asarray(f)
    if data.ndim != 4:
        raise DimensionError(f"Expected an N x C x H x W array, got shape {data.shape}")
    return data


def channel_mean(f: TensorOrArray) -> np.ndarray:
    """
    Mean of every channel over the N, H and W axes.

    Args:
        f: Feature maps of shape (N, C, H, W)

    Returns:
        Vector of length C
    """
    data = _as_array(f)
    if data.size == 0:
        raise DimensionError(f"Cannot take channel statistics of an empty tensor {data.shape}")
    return data.mean(axis=(0, 2, 3))


def channel_std(f: TensorOrArray, mean: np.ndarray, eps: float) -> np.ndarray:
    """
    Per-channel sqrt(biased variance + eps).

    Args:
        f: Feature maps of shape (N, C, H, W)
        mean: Per-channel means from channel_mean
        eps: Stability constant added inside the square root

    Returns:
        Strictly positive vector of length C
    """
    if not eps > 0:
        raise ConfigurationError(f"eps must be > 0, got {eps}")
    data = _as_array(f)
    if data.size == 0:
        raise DimensionError(f"Cannot take channel statistics of an empty tensor {data.shape}")
    mean = np.asarray(mean)
    if mean.shape != (data.shape[1],):
        raise DimensionError(f"mean has shape {mean.shape}, expected ({data.shape[1]},)")
    centered = data - mean.reshape(1, -1, 1, 1)
    return np.sqrt((centered * centered).mean(axis=(0, 2, 3)) + eps)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum out axes where the input had extent 1 but the output did not"""
    if grad.shape == shape:
        return grad
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True)


def _check_broadcast(a: np.ndarray, b: np.ndarray, name: str):
    for da, db in zip(a.shape, b.shape):
        if da != db and db != 1:
            raise DimensionError(f"{name}: cannot combine shapes {a.shape} and {b.shape}")


class Add(Function):
    """a + b, where b may have extent 1 on any axis (bias style)"""

    def forward(self, a, b):
        _check_broadcast(a, b, "add")
        self.a_shape, self.b_shape = a.shape, b.shape
        return a + b

    def backward(self, grad):
        return _unbroadcast(grad, self.a_shape), _unbroadcast(grad, self.b_shape)


class Mul(Function):
    """Elementwise a * b, where b may have extent 1 on any axis"""

    def forward(self, a, b):
        _check_broadcast(a, b, "mul")
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return _unbroadcast(grad * self.b, self.a.shape), _unbroadcast(grad * self.a, self.b.shape)


class Sum(Function):
    """Sum of all elements as a 1 x 1 x 1 x 1 tensor"""

    def forward(self, x):
        self.x_shape = x.shape
        return np.asarray(x.sum(), dtype=x.dtype).reshape(1, 1, 1, 1)

    def backward(self, grad):
        return (np.broadcast_to(grad.reshape(1, 1, 1, 1), self.x_shape).copy(),)


class ReLU(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.maximum(x, 0).astype(x.dtype)

    def backward(self, grad):
        return (grad * self.mask,)


class Conv3x3(Function):
    """3x3 convolution, stride 1, zero padding 1 (output keeps H x W)"""

    def forward(self, x, weight, bias):
        if weight.shape[2:] != (3, 3) or weight.shape[1] != x.shape[1]:
            raise DimensionError(
                f"conv3x3: weight {weight.shape} does not fit input with {x.shape[1]} channels"
            )
        if bias.shape != (1, weight.shape[0], 1, 1):
            raise DimensionError(f"conv3x3: bias shape {bias.shape}, expected (1, {weight.shape[0]}, 1, 1)")
        padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        # (N, C, H, W, 3, 3) windows over the padded input
        self.windows = sliding_window_view(padded, (3, 3), axis=(2, 3))
        self.weight = weight
        self.x_shape = x.shape
        out = np.einsum("nchwij,ocij->nohw", self.windows, weight, optimize=True)
        return out + bias

    def backward(self, grad):
        N, C, H, W = self.x_shape
        grad_weight = np.einsum("nohw,nchwij->ocij", grad, self.windows, optimize=True)
        grad_bias = grad.sum(axis=(0, 2, 3), keepdims=True)
        grad_padded = np.zeros((N, C, H + 2, W + 2), dtype=grad.dtype)
        for i in range(3):
            for j in range(3):
                grad_padded[:, :, i:i + H, j:j + W] += np.einsum(
                    "nohw,oc->nchw", grad, self.weight[:, :, i, j], optimize=True
                )
        return grad_padded[:, :, 1:H + 1, 1:W + 1], grad_weight, grad_bias


class MaxPool2x2(Function):
    """2x2 max pooling with stride 2; a trailing odd row/column is dropped"""

    def forward(self, x):
        N, C, H, W = x.shape
        if H < 2 or W < 2:
            raise DimensionError(f"maxpool2x2 needs H, W >= 2, got {x.shape}")
        H2, W2 = H // 2, W // 2
        self.x_shape = x.shape
        blocks = x[:, :, :2 * H2, :2 * W2].reshape(N, C, H2, 2, W2, 2).transpose(0, 1, 2, 4, 3, 5)
        blocks = blocks.reshape(N, C, H2, W2, 4)
        # first maximum wins so exactly one input receives the gradient
        self.argmax = blocks.argmax(axis=-1)
        return np.take_along_axis(blocks, self.argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        N, C, H, W = self.x_shape
        H2, W2 = H // 2, W // 2
        blocks = np.zeros((N, C, H2, W2, 4), dtype=grad.dtype)
        np.put_along_axis(blocks, self.argmax[..., None], grad[..., None], axis=-1)
        blocks = blocks.reshape(N, C, H2, W2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(N, C, 2 * H2, 2 * W2)
        grad_x = np.zeros(self.x_shape, dtype=grad.dtype)
        grad_x[:, :, :2 * H2, :2 * W2] = blocks
        return (grad_x,)


class Flatten(Function):
    """(N, C, H, W) -> (N, C*H*W, 1, 1)"""

    def forward(self, x):
        self.x_shape = x.shape
        return x.reshape(x.shape[0], -1, 1, 1)

    def backward(self, grad):
        return (grad.reshape(self.x_shape),)


class Dense(Function):
    """Fully connected layer on (N, D, 1, 1) inputs with weight (D_out, D, 1, 1)"""

    def forward(self, x, weight, bias):
        if x.shape[2:] != (1, 1):
            raise DimensionError(f"dense expects (N, D, 1, 1) input, got {x.shape}; flatten first")
        if weight.shape[1] != x.shape[1] or weight.shape[2:] != (1, 1):
            raise DimensionError(f"dense: weight {weight.shape} does not fit input {x.shape}")
        if bias.shape != (1, weight.shape[0], 1, 1):
            raise DimensionError(f"dense: bias shape {bias.shape}, expected (1, {weight.shape[0]}, 1, 1)")
        self.x2 = x[:, :, 0, 0]
        self.w2 = weight[:, :, 0, 0]
        out = self.x2 @ self.w2.T
        return out[:, :, None, None] + bias

    def backward(self, grad):
        g2 = grad[:, :, 0, 0]
        grad_x = (g2 @ self.w2)[:, :, None, None]
        grad_w = (g2.T @ self.x2)[:, :, None, None]
        grad_b = g2.sum(axis=0).reshape(1, -1, 1, 1)
        return grad_x, grad_w, grad_b


class SoftmaxCrossEntropy(Function):
    """Mean cross-entropy of softmax(logits) against integer labels"""

    def forward(self, logits, labels: Optional[np.ndarray] = None):
        if logits.shape[2:] != (1, 1):
            raise DimensionError(f"softmax_cross_entropy expects (N, K, 1, 1) logits, got {logits.shape}")
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (logits.shape[0],):
            raise DimensionError(f"labels shape {labels.shape} does not match batch of {logits.shape[0]}")
        z = logits[:, :, 0, 0]
        z = z - z.max(axis=1, keepdims=True)
        log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        self.probs = np.exp(log_probs)
        self.labels = labels
        loss = -log_probs[np.arange(len(labels)), labels].mean()
        return np.asarray(loss, dtype=logits.dtype).reshape(1, 1, 1, 1)

    def backward(self, grad):
        n = len(self.labels)
        g = self.probs.copy()
        g[np.arange(n), self.labels] -= 1.0
        g *= grad.reshape(()) / n
        return (g[:, :, None, None],)


def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Mul.apply(a, b)


def tensor_sum(x: Tensor) -> Tensor:
    return Sum.apply(x)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def conv3x3(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return Conv3x3.apply(x, weight, bias)


def maxpool2x2(x: Tensor) -> Tensor:
    return MaxPool2x2.apply(x)


def flatten(x: Tensor) -> Tensor:
    return Flatten.apply(x)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return Dense.apply(x, weight, bias)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """
    Mean softmax cross-entropy.

    Args:
        logits: (N, K, 1, 1) class scores
        labels: Integer class ids, length N

    Returns:
        Scalar loss tensor
    """
    return SoftmaxCrossEntropy.apply(logits, labels=labels)
