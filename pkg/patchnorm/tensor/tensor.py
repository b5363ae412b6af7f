"""
Rank-4 tensor with reverse-mode differentiation.
Every value is an N x C x H x W array; vectors are 1 x C x 1 x 1 and scalars 1 x 1 x 1 x 1.
"""
import logging
from abc import ABC, abstractmethod
from typing import Any, Optional, Sequence, Union

import numpy as np

from ..config import get_settings
from ..errors import DimensionError, UsageError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence, float, int]


class Tensor:
    """Dense N x C x H x W array with an optional gradient buffer"""

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: Optional[np.dtype] = None,
        creator: Optional["Function"] = None,
    ):
        """
        Wrap array data as a tensor.

        Args:
            data: Array of rank 4, or anything numpy can turn into one
            requires_grad: Whether backward() should populate .grad
            dtype: Scalar type; floating ndarrays keep their own dtype when omitted,
                everything else falls back to the configured precision
            creator: Function that produced this tensor (None for leaves)
        """
        if dtype is None:
            if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
                dtype = data.dtype
            else:
                dtype = get_settings().dtype
        array = np.ascontiguousarray(data, dtype=dtype)
        if array.ndim != 4:
            raise DimensionError(f"Tensor must be rank 4 (N, C, H, W), got shape {array.shape}")

        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.creator = creator

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        """Return the value of a single-element tensor"""
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        """Copy of the data with no history"""
        return Tensor(self.data.copy())

    @staticmethod
    def vector(values: ArrayLike, requires_grad: bool = False, dtype: Optional[np.dtype] = None) -> "Tensor":
        """Build a 1 x C x 1 x 1 tensor from a length-C vector"""
        array = np.asarray(values, dtype=dtype or get_settings().dtype).reshape(1, -1, 1, 1)
        return Tensor(array, requires_grad=requires_grad)

    def backward(self):
        """Backpropagate from this scalar tensor"""
        backward(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        from .ops import add
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        from .ops import mul
        return mul(self, other)

    def sum(self) -> "Tensor":
        from .ops import tensor_sum
        return tensor_sum(self)


class Function(ABC):
    """Base class for differentiable operations recorded on the tape"""

    def __init__(self, *inputs: Tensor):
        self.inputs = inputs
        self.output: Optional[Tensor] = None

    @abstractmethod
    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        """
        Compute the output array from the input arrays.

        Args:
            *arrays: Data of the input tensors, in order
            **kwargs: Non-tensor parameters of the operation

        Returns:
            Output array (rank 4)
        """
        pass

    @abstractmethod
    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        """
        Map the gradient of the output to gradients of each input.

        Args:
            grad: dLoss/dOutput, same shape as the output

        Returns:
            One gradient per input (None where no gradient flows)
        """
        pass

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> Tensor:
        """Run the forward pass and record the node when any input needs a gradient"""
        func = cls(*inputs)
        out_data = func.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = any(t.requires_grad for t in inputs)
        out = Tensor(out_data, requires_grad=requires_grad, creator=func if requires_grad else None)
        func.output = out
        return out


class Tape:
    """Recorded operations in topological order (inputs before the nodes that use them)"""

    def __init__(self, nodes: list[Function]):
        self.nodes = nodes

    def __len__(self) -> int:
        return len(self.nodes)

    @classmethod
    def from_loss(cls, loss: Tensor) -> "Tape":
        """Collect every node reachable from the loss, ordered so inputs precede users"""
        order: list[Function] = []
        visited: set[int] = set()
        if loss.creator is None:
            return cls(order)

        stack: list[tuple[Function, bool]] = [(loss.creator, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node.inputs:
                if parent.creator is not None and id(parent.creator) not in visited:
                    stack.append((parent.creator, False))
        return cls(order)

    def backward(self, loss: Tensor):
        """Visit each node once in reverse order, accumulating into .grad"""
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}

        for node in reversed(self.nodes):
            out = node.output
            upstream = grads.pop(id(out), None)
            if upstream is None:
                continue
            _accumulate(out, upstream)
            input_grads = node.backward(upstream)
            for tensor, g in zip(node.inputs, input_grads):
                if g is None or not tensor.requires_grad:
                    continue
                if tensor.creator is None:
                    _accumulate(tensor, g)
                elif id(tensor) in grads:
                    grads[id(tensor)] = grads[id(tensor)] + g
                else:
                    grads[id(tensor)] = g

        if loss.creator is None and loss.requires_grad:
            _accumulate(loss, np.ones_like(loss.data))


def _accumulate(tensor: Tensor, g: np.ndarray):
    g = np.asarray(g, dtype=tensor.dtype).reshape(tensor.shape)
    tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g


def backward(loss: Tensor, tape: Optional[Tape] = None) -> Tape:
    """
    Populate .grad on every tensor that requires a gradient.

    Args:
        loss: Single-element tensor produced through recorded operations
        tape: Pre-built tape; built from the loss when omitted

    Returns:
        The tape that was traversed
    """
    if loss.data.size != 1:
        raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise UsageError("backward() called on a loss that does not require grad")

    tape = tape or Tape.from_loss(loss)
    logger.debug(f"Backward over {len(tape)} recorded operations")
    tape.backward(loss)
    return tape
