"""
Tests for the rank-4 tensor engine: channel statistics, recorded operations and backward.
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from patchnorm.errors import ConfigurationError, DimensionError, UsageError
from patchnorm.tensor import (
    Tape,
    Tensor,
    backward,
    channel_mean,
    channel_std,
    conv3x3,
    dense,
    flatten,
    maxpool2x2,
    mul,
    relu,
    softmax_cross_entropy,
    tensor_sum,
)
from patchnorm.tensor.gradcheck import max_relative_error, numerical_gradient


def t64(values, requires_grad=False) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=requires_grad)


def test_channel_mean_examples():
    np.testing.assert_allclose(channel_mean(t64([[[[1, 1], [1, 1]]]])), [1.0])
    np.testing.assert_allclose(channel_mean(t64([[[[1, 3], [1, 3]]]])), [2.0])
    two_channels = t64(np.array([[0, 2], [4, 2]]).reshape(2, 2, 1, 1))
    np.testing.assert_allclose(channel_mean(two_channels), [2.0, 2.0])


def test_channel_std_examples():
    constant = t64(np.full((1, 1, 2, 2), 7.0))
    np.testing.assert_allclose(channel_std(constant, channel_mean(constant), 1e-5), [np.sqrt(1e-5)])
    np.testing.assert_allclose(channel_std(constant, channel_mean(constant), 1e-5), [3.1623e-3], rtol=1e-4)

    two_tone = t64([[[[1, 3], [1, 3]]]])
    mean = channel_mean(two_tone)
    np.testing.assert_allclose(channel_std(two_tone, mean, 1e-12), [1.0], rtol=1e-10)
    np.testing.assert_allclose(channel_std(two_tone, mean, 1e-5), [np.sqrt(1.00001)], rtol=1e-12)


def test_channel_std_rejects_non_positive_eps():
    x = t64(np.ones((1, 1, 2, 2)))
    with pytest.raises(ConfigurationError):
        channel_std(x, channel_mean(x), 0.0)
    with pytest.raises(ConfigurationError):
        channel_std(x, channel_mean(x), -1e-5)


def test_channel_statistics_of_empty_tensor():
    with pytest.raises(DimensionError):
        channel_mean(t64(np.zeros((0, 2, 3, 3))))


def test_channel_statistics_match_loop_oracle():
    rng = np.random.default_rng(3)
    data = rng.normal(2.0, 3.0, size=(2, 3, 4, 5))
    mean = channel_mean(t64(data))
    std = channel_std(t64(data), mean, 1e-5)

    N, C, H, W = data.shape
    for c in range(C):
        total = 0.0
        for n in range(N):
            for h in range(H):
                for w in range(W):
                    total += data[n, c, h, w]
        oracle_mean = total / (N * H * W)
        squares = 0.0
        for n in range(N):
            for h in range(H):
                for w in range(W):
                    squares += (data[n, c, h, w] - oracle_mean) ** 2
        oracle_std = np.sqrt(squares / (N * H * W) + 1e-5)
        assert abs(mean[c] - oracle_mean) / abs(oracle_mean) < 1e-10
        assert abs(std[c] - oracle_std) / oracle_std < 1e-10


def test_tensor_must_be_rank_four():
    with pytest.raises(DimensionError):
        Tensor(np.zeros((2, 3, 4)))


def test_vector_is_one_by_c_by_one_by_one():
    v = Tensor.vector([1.0, 2.0, 3.0], dtype=np.float64)
    assert v.shape == (1, 3, 1, 1)
    assert v.dtype == np.float64


def test_relu_example():
    out = relu(t64(np.array([-1.0, 2.0]).reshape(1, 2, 1, 1)))
    np.testing.assert_array_equal(out.data.reshape(-1), [0.0, 2.0])


def test_relu_keeps_nan():
    out = relu(t64(np.array([np.nan, -1.0, 3.0]).reshape(1, 3, 1, 1)))
    assert np.isnan(out.data[0, 0, 0, 0])
    np.testing.assert_array_equal(out.data.reshape(-1)[1:], [0.0, 3.0])


def test_conv3x3_identity_kernel_keeps_the_map():
    rng = np.random.default_rng(0)
    x = t64(rng.normal(size=(1, 1, 5, 5)))
    kernel = np.zeros((1, 1, 3, 3))
    kernel[0, 0, 1, 1] = 1.0
    out = conv3x3(x, t64(kernel), t64(np.zeros((1, 1, 1, 1))))
    np.testing.assert_allclose(out.data, x.data, atol=1e-15)


def test_conv3x3_channel_mismatch():
    x = t64(np.zeros((1, 2, 4, 4)))
    with pytest.raises(DimensionError):
        conv3x3(x, t64(np.zeros((3, 1, 3, 3))), t64(np.zeros((1, 3, 1, 1))))


def test_dense_with_zero_weights_returns_bias():
    x = t64(np.random.default_rng(1).normal(size=(4, 6, 1, 1)))
    bias = t64(np.array([0.5, -1.0, 2.0]).reshape(1, 3, 1, 1))
    out = dense(x, t64(np.zeros((3, 6, 1, 1))), bias)
    np.testing.assert_array_equal(out.data, np.broadcast_to(bias.data, (4, 3, 1, 1)))


def test_dense_requires_flattened_input():
    with pytest.raises(DimensionError):
        dense(t64(np.zeros((2, 3, 2, 2))), t64(np.zeros((4, 12, 1, 1))), t64(np.zeros((1, 4, 1, 1))))


def test_maxpool_drops_odd_edge():
    x = t64(np.arange(15, dtype=np.float64).reshape(1, 1, 3, 5))
    out = maxpool2x2(x)
    assert out.shape == (1, 1, 1, 2)
    np.testing.assert_array_equal(out.data.reshape(-1), [6.0, 8.0])


def test_grad_of_sum_is_ones():
    x = t64(np.random.default_rng(2).normal(size=(2, 3, 4, 5)), requires_grad=True)
    tensor_sum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones(x.shape))


def test_grad_of_sum_of_squares():
    x = t64(np.array([1.0, 2.0]).reshape(1, 2, 1, 1), requires_grad=True)
    tensor_sum(mul(x, x)).backward()
    np.testing.assert_allclose(x.grad.reshape(-1), [2.0, 4.0])


def test_backward_rejects_non_scalar_loss():
    x = t64(np.ones((1, 2, 1, 1)), requires_grad=True)
    with pytest.raises(UsageError):
        backward(mul(x, x))


def test_backward_rejects_loss_without_grad():
    x = t64(np.ones((1, 2, 1, 1)))
    with pytest.raises(UsageError):
        backward(tensor_sum(x))


def test_tape_is_topological_and_visits_shared_nodes_once():
    x = t64(np.array([1.5, -2.0, 3.0]).reshape(1, 3, 1, 1), requires_grad=True)
    square = mul(x, x)
    loss = tensor_sum(square + x)

    tape = Tape.from_loss(loss)
    assert len(tape) == 3
    position = {id(node): i for i, node in enumerate(tape.nodes)}
    for node in tape.nodes:
        for parent in node.inputs:
            if parent.creator is not None:
                assert position[id(parent.creator)] < position[id(node)]

    backward(loss, tape)
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_cnn_stub_matches_finite_differences():
    rng = np.random.default_rng(11)
    x = t64(rng.normal(size=(2, 3, 4, 4)), requires_grad=True)
    weight = t64(rng.normal(scale=0.5, size=(4, 3, 3, 3)), requires_grad=True)
    bias = t64(rng.normal(scale=0.1, size=(1, 4, 1, 1)), requires_grad=True)
    head = t64(rng.normal(scale=0.5, size=(5, 16, 1, 1)), requires_grad=True)
    head_bias = t64(np.zeros((1, 5, 1, 1)), requires_grad=True)
    labels = np.array([1, 3])

    def forward() -> Tensor:
        h = maxpool2x2(relu(conv3x3(x, weight, bias)))
        return softmax_cross_entropy(dense(flatten(h), head, head_bias), labels)

    forward().backward()
    for tensor in (x, weight, bias, head, head_bias):
        numeric = numerical_gradient(lambda: forward().item(), tensor)
        assert max_relative_error(tensor.grad, numeric) < 1e-4


def test_operations_are_deterministic():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 3, 6, 6))
    w = rng.normal(size=(4, 3, 3, 3))
    b = np.zeros((1, 4, 1, 1))
    first = conv3x3(t64(x), t64(w), t64(b)).data
    second = conv3x3(t64(x), t64(w), t64(b)).data
    assert first.tobytes() == second.tobytes()
