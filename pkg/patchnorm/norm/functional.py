"""
Functional forms of the normalization layers.

Batch-statistic family (BN, PBN, pixel BN) reads and updates a NormState;
per-sample family (IN, LN, GN) only uses its gamma, beta and eps.
"""
import logging
from typing import Optional

import numpy as np

from .blend import NormPlan, Region, SampleGroupNormalize
from .state import NormState
from ..errors import ConfigurationError, DivergenceError, UsageError
from ..scheme import (
    BasePartitioner,
    PatchPartitioner,
    PixelPartitioner,
    SchemeConfig,
    assign_channels,
    draw_subset,
)
from ..tensor import Tensor, channel_mean, channel_std

logger = logging.getLogger(__name__)


def _accumulate_global_stats(f: Tensor, state: NormState) -> None:
    """Global channel statistics of the batch folded into the running estimates"""
    mean = channel_mean(f)
    std = channel_std(f, mean, state.eps)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
        raise DivergenceError(f"non-finite batch statistics over {f.shape[1]} channels")
    state.update_running(mean, std)


def bn_plan(f: Tensor, state: NormState) -> NormPlan:
    """
    Plan for standard batch normalization.

    Train mode normalizes with batch statistics and updates the running estimates;
    eval mode normalizes with the running estimates only.
    """
    state.check_input(f)
    state.validate()
    N, C, H, W = f.shape
    if state.training:
        _accumulate_global_stats(f, state)
        lam = 1.0
    else:
        lam = 0.0
    return NormPlan.whole(C, H * W, state.running_mean, state.running_std, lam, state.eps)


def bn_forward(f: Tensor, state: NormState) -> Tensor:
    return bn_plan(f, state).apply(f, state.gamma, state.beta)


def patch_plan(
    f: Tensor,
    state: NormState,
    cfg: SchemeConfig,
    rng: np.random.Generator,
    partitioner: Optional[BasePartitioner] = None,
) -> NormPlan:
    """
    Plan for patch-aware batch normalization.

    Steps, in order: global statistics and running update, subset draw, per-channel patch
    counts, one partition per channel group, then blended per-region normalization using the
    running estimates just updated. Eval mode is plain BN eval.

    Args:
        f: Feature maps (N, C, H, W)
        state: Layer state, mutated in train mode
        cfg: Scheme configuration
        rng: Generator for every random draw of this pass
        partitioner: Spatial partitioner (rectangular patches by default)

    Returns:
        NormPlan whose regions cover every (channel, pixel) exactly once
    """
    if not 0.0 <= cfg.lam <= 1.0:
        raise ConfigurationError(f"lambda must be in [0, 1], got {cfg.lam}")
    if not state.training:
        return bn_plan(f, state)

    state.check_input(f)
    state.validate()
    partitioner = partitioner or PatchPartitioner.from_config(cfg)
    N, C, H, W = f.shape

    _accumulate_global_stats(f, state)

    subset = draw_subset(cfg, rng)
    grouping = assign_channels(C, subset, rng)
    regions = []
    for group in grouping.groups:
        for pixels in partitioner.partition(H, W, group.patch_count, rng):
            regions.append(Region(group.channels, pixels, group.patch_count))

    logger.debug(
        f"{partitioner.name} plan: subset={sorted(subset)} groups={grouping.group_count} regions={len(regions)}"
    )
    return NormPlan(
        tuple(regions),
        state.running_mean.copy(),
        state.running_std.copy(),
        cfg.effective_lambda,
        state.eps,
    )


def pbn_forward(f: Tensor, state: NormState, cfg: SchemeConfig, rng: np.random.Generator) -> Tensor:
    return patch_plan(f, state, cfg, rng).apply(f, state.gamma, state.beta)


def pixel_bn_forward(f: Tensor, state: NormState, cfg: SchemeConfig, rng: np.random.Generator) -> Tensor:
    plan = patch_plan(f, state, cfg, rng, PixelPartitioner())
    return plan.apply(f, state.gamma, state.beta)


def pbn_backward(output: Tensor, upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gradients for (f, gamma, beta) of a recorded normalization output.

    Args:
        output: Tensor returned by a forward call
        upstream: dLoss/dOutput

    Returns:
        (grad_f, grad_gamma, grad_beta)
    """
    if output is None or output.creator is None:
        raise UsageError("No recorded forward pass to differentiate")
    return output.creator.backward(np.asarray(upstream, dtype=output.dtype))


def gn_forward(f: Tensor, state: NormState, groups: int) -> Tensor:
    """Group normalization: per sample over each block of C/groups channels"""
    state.check_input(f)
    if not state.eps > 0:
        raise ConfigurationError(f"eps must be > 0, got {state.eps}")
    if groups < 1 or f.shape[1] % groups != 0:
        raise ConfigurationError(f"GroupNorm groups={groups} must divide {f.shape[1]} channels")
    return SampleGroupNormalize.apply(f, state.gamma, state.beta, groups=groups, eps=state.eps)


def in_forward(f: Tensor, state: NormState) -> Tensor:
    return gn_forward(f, state, groups=f.shape[1])


def ln_forward(f: Tensor, state: NormState) -> Tensor:
    return gn_forward(f, state, groups=1)
