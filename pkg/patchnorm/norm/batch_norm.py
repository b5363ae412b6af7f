"""
Batch-statistic layers: BN, patch-aware BN and the pixel-group ablation.
"""
import logging
from typing import Optional

import numpy as np

from .base_norm import BaseNorm
from .blend import NormPlan
from .functional import bn_plan, patch_plan
from .state import NormState
from ..scheme import BasePartitioner, PatchPartitioner, PixelPartitioner, SchemeConfig
from ..tensor import Tensor

logger = logging.getLogger(__name__)


class BatchNorm(BaseNorm):
    """Standard batch normalization"""

    kind = "bn"
    uses_batch_statistics = True

    def __init__(self, state: NormState):
        super().__init__(state)
        self.last_plan: Optional[NormPlan] = None

    def plan(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> NormPlan:
        return bn_plan(x, self.state)

    def forward(self, x, rng=None):
        self.last_plan = self.plan(x, rng)
        return self.last_plan.apply(x, self.state.gamma, self.state.beta)


class PatchBatchNorm(BatchNorm):
    """Patch-aware batch normalization; eval mode is identical to BN"""

    kind = "pbn"

    def __init__(
        self,
        state: NormState,
        cfg: SchemeConfig,
        partitioner: Optional[BasePartitioner] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        """
        Args:
            state: Layer state
            cfg: Scheme configuration
            partitioner: Spatial partitioner; rectangles per cfg when omitted
            rng: Generator used when forward() is called without one
        """
        super().__init__(state)
        self.cfg = cfg
        self.partitioner = partitioner or PatchPartitioner.from_config(cfg)
        self.rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
        # Plain BN training while the accumulated statistics are seeded
        self.warmup = False

    def plan(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> NormPlan:
        if self.warmup:
            return bn_plan(x, self.state)
        return patch_plan(x, self.state, self.cfg, rng if rng is not None else self.rng, self.partitioner)


class PixelBatchNorm(PatchBatchNorm):
    """Ablation: random pixel groups with patch-grid sizes"""

    kind = "pixel_bn"

    def __init__(self, state: NormState, cfg: SchemeConfig, rng: Optional[np.random.Generator] = None):
        super().__init__(state, cfg, PixelPartitioner(), rng)
