"""
Finite-difference gradient checks for every normalization layer.

Randomised layers are checked against their recorded plan, so the regions and the
accumulated statistics stay fixed while inputs are perturbed.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .batch_norm import BatchNorm, PatchBatchNorm, PixelBatchNorm
from .sample_norm import GroupNorm, InstanceNorm, LayerNorm
from .state import NormState
from ..errors import ConfigurationError
from ..scheme import SchemeConfig
from ..tensor import Tensor, tensor_sum, mul
from ..tensor.gradcheck import max_relative_error, numerical_gradient

logger = logging.getLogger(__name__)

MAX_CHECK_SHAPE = (2, 4, 6, 6)
DEFAULT_TOLERANCE = 1e-4
CHECK_LAMBDAS = (0.0, 0.5, 1.0)
CHECK_PATCH_COUNTS = (1, 2, 4, 9)


@dataclass(frozen=True)
class GradCheckCase:
    layer: str
    lam: Optional[float] = None
    patch_count: Optional[int] = None

    @property
    def label(self) -> str:
        parts = [self.layer]
        if self.patch_count is not None:
            parts.append(f"P{self.patch_count}")
        if self.lam is not None:
            parts.append(f"lam={self.lam:g}")
        return " ".join(parts)


@dataclass(frozen=True)
class GradCheckResult:
    case: GradCheckCase
    shape: tuple[int, int, int, int]
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error)) and self.max_error < self.tolerance


def default_cases() -> list[GradCheckCase]:
    cases = [GradCheckCase("bn"), GradCheckCase("bn_eval")]
    cases += [GradCheckCase("pbn", lam, p) for lam in CHECK_LAMBDAS for p in CHECK_PATCH_COUNTS]
    cases += [GradCheckCase("pixel_bn", 0.5, 4), GradCheckCase("in"), GradCheckCase("ln"), GradCheckCase("gn")]
    return cases


def validate_shape(shape: tuple[int, ...]):
    if len(shape) != 4 or any(s < 1 for s in shape):
        raise ConfigurationError(f"Gradient-check size must be four positive extents, got {shape}")
    if any(s > limit for s, limit in zip(shape, MAX_CHECK_SHAPE)):
        raise ConfigurationError(f"Gradient-check size {shape} exceeds {MAX_CHECK_SHAPE}")


def _random_state(channels: int, rng: np.random.Generator) -> NormState:
    state = NormState.create(channels, dtype=np.float64)
    state.gamma.data[...] = rng.uniform(0.5, 1.5, size=state.gamma.shape)
    state.beta.data[...] = rng.normal(size=state.beta.shape)
    state.running_mean = rng.normal(scale=0.5, size=channels)
    state.running_std = rng.uniform(0.5, 1.5, size=channels)
    return state


def _build_forward(case: GradCheckCase, x: Tensor, state: NormState, seed: int) -> Callable[[], Tensor]:
    """Run the layer once and return a replay of exactly that computation"""
    layer_rng = np.random.default_rng(seed + 1)
    if case.layer in ("bn", "bn_eval"):
        layer = BatchNorm(state)
        if case.layer == "bn_eval":
            layer.eval()
    elif case.layer in ("pbn", "pixel_bn"):
        cfg = SchemeConfig(rng_seed=seed).forced(case.patch_count, lam=case.lam)
        layer_class = PatchBatchNorm if case.layer == "pbn" else PixelBatchNorm
        layer = layer_class(state, cfg, rng=layer_rng)
    elif case.layer == "in":
        layer = InstanceNorm(state)
    elif case.layer == "ln":
        layer = LayerNorm(state)
    elif case.layer == "gn":
        layer = GroupNorm(state, 2 if state.channels % 2 == 0 else 1)
    else:
        raise ConfigurationError(f"Unknown gradient-check layer '{case.layer}'")

    layer(x)
    if isinstance(layer, BatchNorm):
        plan = layer.last_plan
        return lambda: plan.apply(x, state.gamma, state.beta)
    return lambda: layer.forward(x)


def check_case(
    case: GradCheckCase, shape: tuple[int, int, int, int], seed: int = 0, tolerance: float = DEFAULT_TOLERANCE
) -> GradCheckResult:
    """
    Compare analytic and central-difference gradients of sum(weights * layer(x)).

    Args:
        case: Layer and scheme combination
        shape: Input shape, at most 2x4x6x6
        seed: Seed for inputs, parameters and scheme draws
        tolerance: Maximum accepted relative error

    Returns:
        GradCheckResult with the worst error over x, gamma and beta
    """
    validate_shape(shape)
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal(shape), requires_grad=True, dtype=np.float64)
    weights = Tensor(rng.standard_normal(shape), dtype=np.float64)
    state = _random_state(shape[1], rng)

    forward = _build_forward(case, x, state, seed)

    loss = tensor_sum(mul(forward(), weights))
    loss.backward()

    def loss_value() -> float:
        return float((forward().data * weights.data).sum())

    worst = 0.0
    for tensor in (x, state.gamma, state.beta):
        numeric = numerical_gradient(loss_value, tensor)
        worst = max(worst, max_relative_error(tensor.grad, numeric))

    result = GradCheckResult(case, tuple(shape), worst, tolerance)
    logger.debug(f"{case.label} {shape}: max relative error {worst:.3e}")
    return result


def run_suite(
    shapes: Iterable[tuple[int, int, int, int]],
    seed: int = 0,
    tolerance: float = DEFAULT_TOLERANCE,
    cases: Optional[list[GradCheckCase]] = None,
) -> list[GradCheckResult]:
    """Check every case on every shape"""
    shapes = list(shapes)
    if not shapes:
        raise ConfigurationError("Gradient check needs at least one size")
    for shape in shapes:
        validate_shape(shape)

    results = []
    for shape in shapes:
        for case in cases or default_cases():
            results.append(check_case(case, shape, seed, tolerance))
    return results
