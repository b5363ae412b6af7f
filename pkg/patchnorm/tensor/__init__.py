from .tensor import Tensor, Function, Tape, backward
from .ops import (
    channel_mean,
    channel_std,
    add,
    mul,
    tensor_sum,
    relu,
    conv3x3,
    maxpool2x2,
    flatten,
    dense,
    softmax_cross_entropy,
)
