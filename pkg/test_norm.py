"""
Tests for the normalization layers: BN, patch-aware BN, pixel-group BN, IN, LN and GN.
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from patchnorm.errors import ConfigurationError, DimensionError, DivergenceError, LoadError, UsageError
from patchnorm.norm import (
    BatchNorm,
    GroupNorm,
    InstanceNorm,
    LayerNorm,
    NormFactory,
    NormState,
    PatchBatchNorm,
    PixelBatchNorm,
    RECORD_FIELDS,
    bn_forward,
    gn_forward,
    in_forward,
    ln_forward,
    patch_plan,
    pbn_forward,
)
from patchnorm.norm.gradcheck import GradCheckCase, check_case, default_cases, run_suite
from patchnorm.scheme import SchemeConfig
from patchnorm.tensor import Tensor


def make_state(channels: int, **kwargs) -> NormState:
    return NormState.create(channels, dtype=np.float64, **kwargs)


def random_input(shape, seed=0, loc=0.0, scale=1.0) -> Tensor:
    return Tensor(np.random.default_rng(seed).normal(loc, scale, size=shape), requires_grad=True)


# BatchNorm

def test_bn_constant_input_is_zero():
    out = bn_forward(Tensor(np.full((3, 2, 4, 4), 5.0)), make_state(2))
    np.testing.assert_array_equal(out.data, 0.0)


def test_bn_two_tone_example():
    x = Tensor(np.array([[[[1.0, 3.0], [1.0, 3.0]]]]))
    out = bn_forward(x, make_state(1, eps=1e-12))
    np.testing.assert_allclose(out.data, [[[[-1.0, 1.0], [-1.0, 1.0]]]], atol=1e-10)


def test_bn_running_mean_update():
    state = make_state(1)
    bn_forward(Tensor(np.ones((2, 1, 3, 3))), state)
    np.testing.assert_allclose(state.running_mean, [0.1])
    np.testing.assert_allclose(state.running_std, [0.9 + 0.1 * np.sqrt(1e-5)])


def test_bn_eval_uses_running_statistics():
    state = make_state(2)
    state.running_mean = np.array([1.0, -2.0])
    state.running_std = np.array([2.0, 0.5])
    state.eval()
    x = random_input((2, 2, 3, 3), seed=1)
    out = bn_forward(x, state)
    expected = (x.data - state.running_mean.reshape(1, 2, 1, 1)) / state.running_std.reshape(1, 2, 1, 1)
    np.testing.assert_allclose(out.data, expected, rtol=1e-12)
    np.testing.assert_array_equal(state.running_mean, [1.0, -2.0])


def test_bn_channel_mismatch():
    with pytest.raises(DimensionError):
        bn_forward(Tensor(np.zeros((2, 3, 2, 2))), make_state(2))


def test_state_rejects_non_positive_eps():
    with pytest.raises(ConfigurationError):
        make_state(2, eps=0.0)


# Patch-aware BN

def test_pbn_single_patch_full_weight_equals_bn():
    x = random_input((4, 6, 8, 8), seed=2, loc=1.0, scale=2.0)
    cfg = SchemeConfig().forced(1, lam=1.0)
    pbn_out = pbn_forward(x, make_state(6), cfg, np.random.default_rng(0))
    bn_out = bn_forward(x, make_state(6))
    np.testing.assert_allclose(pbn_out.data, bn_out.data, rtol=1e-6, atol=1e-12)


def random_shapes(count: int, limits: tuple[int, int, int, int], seed: int) -> list[tuple[int, int, int, int]]:
    """Shapes up to limits with at least two values per channel"""
    rng = np.random.default_rng(seed)
    shapes = []
    while len(shapes) < count:
        shape = tuple(int(rng.integers(1, limit + 1)) for limit in limits)
        if shape[0] * shape[2] * shape[3] >= 2:
            shapes.append(shape)
    return shapes


def test_pbn_reduction_on_many_tensors():
    cfg = SchemeConfig().forced(1, lam=1.0)
    for i, shape in enumerate(random_shapes(100, (4, 8, 12, 12), seed=0)):
        x = random_input(shape, seed=i, loc=float(i % 5) - 2.0, scale=1.0 + i % 3)
        upstream = np.random.default_rng(1000 + i).normal(size=shape)
        pbn = PatchBatchNorm(make_state(shape[1]), cfg, rng=np.random.default_rng(i))
        bn = BatchNorm(make_state(shape[1]))

        np.testing.assert_allclose(pbn(x).data, bn(x).data, rtol=1e-6, atol=1e-12, err_msg=str(shape))
        for pbn_grad, bn_grad in zip(pbn.backward(upstream), bn.backward(upstream)):
            np.testing.assert_allclose(pbn_grad, bn_grad, rtol=1e-6, atol=1e-12, err_msg=str(shape))


def test_pbn_zero_weight_in_eval_is_identity():
    x = random_input((2, 3, 5, 5), seed=3)
    state = make_state(3)
    state.eval()
    out = pbn_forward(x, state, SchemeConfig(lam=0.0), np.random.default_rng(0))
    np.testing.assert_allclose(out.data, x.data, rtol=1e-12)


def test_pbn_zero_weight_in_train_uses_updated_running_statistics():
    x = random_input((2, 3, 5, 5), seed=3, loc=0.5)
    state = make_state(3)
    out = pbn_forward(x, state, SchemeConfig(lam=0.0), np.random.default_rng(0))
    expected = (x.data - state.running_mean.reshape(1, 3, 1, 1)) / state.running_std.reshape(1, 3, 1, 1)
    np.testing.assert_allclose(out.data, expected, rtol=1e-12)


def test_pbn_constant_quadrants_are_zero():
    plane = np.zeros((4, 4))
    plane[:2, :2], plane[:2, 2:], plane[2:, :2], plane[2:, 2:] = 1.0, 5.0, -2.0, 7.0
    x = Tensor(plane.reshape(1, 1, 4, 4))
    cfg = SchemeConfig(split_mode="equal").forced(4, lam=1.0)
    out = pbn_forward(x, make_state(1), cfg, np.random.default_rng(0))
    np.testing.assert_allclose(out.data, 0.0, atol=1e-12)


def test_pbn_rejects_lambda_out_of_range():
    cfg = SchemeConfig.model_construct(lam=1.5)
    with pytest.raises(ConfigurationError):
        patch_plan(random_input((2, 2, 4, 4)), make_state(2), cfg, np.random.default_rng(0))


def test_pbn_degrades_on_tiny_planes():
    x = random_input((4, 3, 1, 2), seed=4)
    cfg = SchemeConfig(candidate_set=[9], subset_size=1, lam=1.0)
    out = pbn_forward(x, make_state(3), cfg, np.random.default_rng(0))
    assert np.all(np.isfinite(out.data))


def test_pbn_patches_are_normalized():
    cfg = SchemeConfig(candidate_set=[1, 2, 4, 9], subset_size=3, lam=1.0)
    rng = np.random.default_rng(5)
    for i in range(100):
        N, C = int(rng.integers(2, 5)), int(rng.integers(1, 9))
        H, W = int(rng.integers(8, 13)), int(rng.integers(8, 13))
        x = random_input((N, C, H, W), seed=100 + i, loc=rng.uniform(-3, 3), scale=rng.uniform(0.5, 3.0))
        layer = PatchBatchNorm(make_state(C), cfg, rng=np.random.default_rng(i))
        out = layer(x).data.reshape(N, C, H * W)

        for region in layer.last_plan.regions:
            for c in region.channels:
                values = out[:, c, region.pixels]
                assert abs(values.mean()) < 1e-5
                assert abs(values.std() - 1.0) < 1e-3


def test_pbn_regions_cover_every_channel_and_pixel_once():
    x = random_input((2, 8, 9, 9), seed=6)
    layer = PatchBatchNorm(make_state(8), SchemeConfig(candidate_set=[1, 2, 4, 9], subset_size=4))
    layer(x)
    coverage = np.zeros((8, 81), dtype=np.int64)
    for region in layer.last_plan.regions:
        coverage[np.ix_(region.channels, region.pixels)] += 1
    np.testing.assert_array_equal(coverage, 1)


EVAL_CONFIGS = [
    SchemeConfig(),
    SchemeConfig(lam=0.9, rng_seed=17),
    SchemeConfig(candidate_set=[9], subset_size=1, split_mode="equal"),
    SchemeConfig(use_global_stats=False),
]


def test_eval_output_is_independent_of_scheme():
    rng = np.random.default_rng(7)
    for i in range(20):
        channels = int(rng.integers(1, 9))
        state = make_state(channels)
        state.gamma.data[...] = rng.uniform(0.5, 1.5, size=state.gamma.shape)
        state.beta.data[...] = rng.normal(size=state.beta.shape)
        state.running_mean = rng.normal(size=channels)
        state.running_std = rng.uniform(0.3, 3.0, size=channels)
        state.eval()
        x = random_input((3, channels, 6, 6), seed=200 + i)

        reference = bn_forward(x, state).data.tobytes()
        for j, cfg in enumerate(EVAL_CONFIGS):
            for layer_class in (PatchBatchNorm, PixelBatchNorm):
                layer = layer_class(state, cfg, rng=np.random.default_rng(j))
                assert layer(x).data.tobytes() == reference


def test_running_statistics_follow_moving_average():
    rng = np.random.default_rng(8)
    configs = [
        SchemeConfig(),
        SchemeConfig(lam=0.2, rng_seed=5, split_mode="equal"),
        SchemeConfig(candidate_set=[2, 9], subset_size=1, lam=1.0, rng_seed=9),
        SchemeConfig(use_global_stats=False, rng_seed=3),
    ]
    layers = [PatchBatchNorm(make_state(5), cfg, rng=np.random.default_rng(i)) for i, cfg in enumerate(configs)]
    layers.append(BatchNorm(make_state(5)))

    expected_mean, expected_std = np.zeros(5), np.ones(5)
    for _ in range(50):
        x = Tensor(rng.normal(rng.normal(size=(1, 5, 1, 1)), rng.uniform(0.5, 2.0), size=(8, 5, 6, 6)))
        for layer in layers:
            layer(x)
        batch_mean = x.data.mean(axis=(0, 2, 3))
        batch_std = np.sqrt(x.data.var(axis=(0, 2, 3)) + 1e-5)
        expected_mean = 0.9 * expected_mean + 0.1 * batch_mean
        expected_std = 0.9 * expected_std + 0.1 * batch_std

    reference = layers[0].state
    np.testing.assert_allclose(reference.running_mean, expected_mean, atol=1e-6)
    np.testing.assert_allclose(reference.running_std, expected_std, atol=1e-6)
    for layer in layers[1:]:
        assert layer.state.running_mean.tobytes() == reference.running_mean.tobytes()
        assert layer.state.running_std.tobytes() == reference.running_std.tobytes()


def test_non_finite_batch_statistics_are_divergence():
    state = make_state(2)
    x = random_input((2, 2, 4, 4), seed=16)
    x.data[0, 1, 0, 0] = np.nan
    for forward in (lambda: bn_forward(x, state),
                    lambda: pbn_forward(x, state, SchemeConfig(), np.random.default_rng(0))):
        with pytest.raises(DivergenceError):
            forward()
    np.testing.assert_array_equal(state.running_mean, [0.0, 0.0])
    np.testing.assert_array_equal(state.running_std, [1.0, 1.0])


def test_pbn_without_global_stats_still_accumulates():
    state = make_state(2)
    layer = PatchBatchNorm(state, SchemeConfig(use_global_stats=False), rng=np.random.default_rng(0))
    layer(random_input((4, 2, 6, 6), seed=9, loc=2.0))
    assert layer.last_plan.lam == 1.0
    assert np.all(state.running_mean > 0)


# Backward

def test_backward_before_forward_is_usage_error():
    layer = PatchBatchNorm(make_state(2), SchemeConfig())
    with pytest.raises(UsageError):
        layer.backward(np.ones((1, 2, 2, 2)))


def test_zero_weight_gradient_is_scaled_upstream():
    x = random_input((2, 3, 4, 4), seed=10)
    state = make_state(3)
    state.gamma.data[...] = np.array([0.5, 2.0, -1.0]).reshape(1, 3, 1, 1)
    layer = PatchBatchNorm(state, SchemeConfig(lam=0.0), rng=np.random.default_rng(0))
    layer(x)
    upstream = np.random.default_rng(11).normal(size=x.shape)
    grad_x, _, _ = layer.backward(upstream)

    sigma_hat = layer.last_plan.sigma_hat.reshape(1, 3, 1, 1)
    np.testing.assert_allclose(grad_x, upstream * state.gamma.data / sigma_hat, rtol=1e-12)


def test_single_patch_gradients_equal_bn():
    x = random_input((3, 4, 5, 5), seed=12)
    upstream = np.random.default_rng(13).normal(size=x.shape)
    pbn = PatchBatchNorm(make_state(4), SchemeConfig().forced(1, lam=1.0), rng=np.random.default_rng(0))
    bn = BatchNorm(make_state(4))
    pbn(x)
    bn(x)
    for pbn_grad, bn_grad in zip(pbn.backward(upstream), bn.backward(upstream)):
        np.testing.assert_allclose(pbn_grad, bn_grad, rtol=1e-6, atol=1e-12)


def test_affine_gradients_do_not_depend_on_patch_count():
    x = random_input((2, 4, 6, 6), seed=14)
    upstream = np.random.default_rng(15).normal(size=x.shape)
    for patch_count in (1, 2, 4, 9):
        layer = PatchBatchNorm(make_state(4), SchemeConfig().forced(patch_count), rng=np.random.default_rng(0))
        layer(x)
        _, grad_gamma, grad_beta = layer.backward(upstream)
        assert grad_gamma.shape == (1, 4, 1, 1)
        np.testing.assert_allclose(grad_beta.reshape(-1), upstream.sum(axis=(0, 2, 3)), rtol=1e-12)


def test_gradient_suite_passes():
    results = run_suite([(2, 4, 6, 6)], seed=0)
    assert len(results) == len(default_cases())
    failures = [(r.case.label, r.max_error) for r in results if not r.passed]
    assert failures == []


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("patch_count", [1, 2, 4, 9])
def test_pbn_gradient_on_small_shapes(lam, patch_count):
    result = check_case(GradCheckCase("pbn", lam, patch_count), (1, 3, 5, 4), seed=patch_count)
    assert result.passed, result.max_error


# Pixel-group BN

def test_pixel_bn_single_group_equals_bn():
    x = random_input((3, 4, 5, 5), seed=16)
    cfg = SchemeConfig().forced(1, lam=1.0)
    pixel = PixelBatchNorm(make_state(4), cfg, rng=np.random.default_rng(0))
    np.testing.assert_allclose(pixel(x).data, bn_forward(x, make_state(4)).data, rtol=1e-6, atol=1e-12)


def test_pixel_bn_constant_input_gives_beta():
    state = make_state(3)
    state.beta.data[...] = np.array([0.2, -0.4, 1.0]).reshape(1, 3, 1, 1)
    layer = PixelBatchNorm(state, SchemeConfig(lam=1.0), rng=np.random.default_rng(0))
    out = layer(Tensor(np.full((2, 3, 4, 4), 3.0)))
    np.testing.assert_allclose(out.data, np.broadcast_to(state.beta.data, out.shape), atol=1e-12)


def test_pixel_bn_groups_match_loop_oracle():
    x = random_input((2, 2, 6, 6), seed=17)
    layer = PixelBatchNorm(make_state(2), SchemeConfig().forced(4, lam=1.0), rng=np.random.default_rng(3))
    out = layer(x).data.reshape(2, 2, 36)
    flat = x.data.reshape(2, 2, 36)

    for region in layer.last_plan.regions:
        for c in region.channels:
            values = [flat[n, c, p] for n in range(2) for p in region.pixels]
            mean = sum(values) / len(values)
            var = sum((v - mean) ** 2 for v in values) / len(values)
            for n in range(2):
                for p in region.pixels:
                    expected = (flat[n, c, p] - mean) / np.sqrt(var + 1e-5)
                    assert abs(out[n, c, p] - expected) < 1e-10


# Per-sample baselines

def test_sample_norms_zero_on_constant_input():
    x = Tensor(np.full((2, 4, 3, 3), -1.5))
    for out in (in_forward(x, make_state(4)), ln_forward(x, make_state(4)), gn_forward(x, make_state(4), 2)):
        np.testing.assert_allclose(out.data, 0.0, atol=1e-12)


def test_collapsed_axes_agree():
    x = random_input((1, 1, 4, 5), seed=18)
    reference = bn_forward(x, make_state(1)).data
    for out in (in_forward(x, make_state(1)), ln_forward(x, make_state(1)), gn_forward(x, make_state(1), 1)):
        np.testing.assert_allclose(out.data, reference, rtol=1e-12)


def _group_oracle(data: np.ndarray, groups: int, eps: float) -> np.ndarray:
    N, C, H, W = data.shape
    size = C // groups
    out = np.empty_like(data)
    for n in range(N):
        for g in range(groups):
            values = [data[n, c, h, w] for c in range(g * size, (g + 1) * size) for h in range(H) for w in range(W)]
            mean = sum(values) / len(values)
            var = sum((v - mean) ** 2 for v in values) / len(values)
            for c in range(g * size, (g + 1) * size):
                for h in range(H):
                    for w in range(W):
                        out[n, c, h, w] = (data[n, c, h, w] - mean) / np.sqrt(var + eps)
    return out


def test_sample_norms_match_loop_oracle():
    x = random_input((2, 4, 3, 3), seed=19, loc=1.0, scale=2.0)
    np.testing.assert_allclose(in_forward(x, make_state(4)).data, _group_oracle(x.data, 4, 1e-5), atol=1e-10)
    np.testing.assert_allclose(ln_forward(x, make_state(4)).data, _group_oracle(x.data, 1, 1e-5), atol=1e-10)
    np.testing.assert_allclose(gn_forward(x, make_state(4), 2).data, _group_oracle(x.data, 2, 1e-5), atol=1e-10)


def test_group_norm_groups_must_divide_channels():
    with pytest.raises(ConfigurationError):
        GroupNorm(make_state(4), 3)
    with pytest.raises(ConfigurationError):
        gn_forward(random_input((1, 4, 2, 2)), make_state(4), 3)


def test_sample_norms_ignore_mode():
    x = random_input((2, 4, 3, 3), seed=20)
    for layer in (InstanceNorm(make_state(4)), LayerNorm(make_state(4)), GroupNorm(make_state(4), 2)):
        train_out = layer(x).data
        layer.eval()
        assert layer(x).data.tobytes() == train_out.tobytes()


# State records and factory

def test_state_record_fields():
    state = make_state(3, momentum=0.2)
    record = state.to_record(prefix="block0.norm.")
    assert sorted(record) == sorted(f"block0.norm.{key}" for key in RECORD_FIELDS)
    assert all(value.dtype == np.dtype("<f8") for value in record.values())

    restored = NormState.from_record(record, prefix="block0.norm.", dtype=np.float64)
    assert restored.mode == "eval"
    assert restored.momentum == 0.2
    np.testing.assert_array_equal(restored.running_std, state.running_std)


def test_state_record_missing_key():
    record = make_state(2).to_record()
    del record["running_std"]
    with pytest.raises(LoadError):
        NormState.from_record(record)


def test_state_record_rejects_non_positive_std():
    record = make_state(2).to_record()
    record["running_std"] = np.array([1.0, 0.0])
    with pytest.raises(LoadError):
        NormState.from_record(record)


def test_factory_builds_every_kind():
    factory = NormFactory(SchemeConfig(), gn_groups=2)
    for kind in ("bn", "pbn", "pixel_bn", "in", "ln", "gn"):
        layer = factory.create(kind, 4, dtype=np.float64)
        assert layer.kind == kind
    with pytest.raises(ConfigurationError):
        factory.create("batchnorm", 4)


def test_factory_layers_are_reproducible():
    x = random_input((2, 4, 8, 8), seed=21)

    def run(run_seed):
        factory = NormFactory(SchemeConfig(), run_seed=run_seed)
        first, second = factory.create("pbn", 4, dtype=np.float64), factory.create("pbn", 4, dtype=np.float64)
        return first(x).data, second(x).data

    a_first, a_second = run(5)
    b_first, b_second = run(5)
    assert a_first.tobytes() == b_first.tobytes()
    assert a_second.tobytes() == b_second.tobytes()
