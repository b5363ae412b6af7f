"""
Normalization layer factory.
Selects and builds the layer class for a norm kind.
"""
import logging
from typing import Optional

import numpy as np

from .base_norm import BaseNorm
from .batch_norm import BatchNorm, PatchBatchNorm, PixelBatchNorm
from .sample_norm import GroupNorm, InstanceNorm, LayerNorm
from .state import NormState
from ..errors import ConfigurationError
from ..scheme import SchemeConfig

logger = logging.getLogger(__name__)

NORM_KINDS = ("bn", "pbn", "pixel_bn", "in", "ln", "gn")
BATCH_STAT_KINDS = frozenset({"bn", "pbn", "pixel_bn"})


def same_family(kind_a: str, kind_b: str) -> bool:
    """Kinds that can share one NormState (and so one checkpoint)"""
    return (kind_a in BATCH_STAT_KINDS) == (kind_b in BATCH_STAT_KINDS)


class NormFactory:
    """Factory for normalization layers of a given kind"""

    def __init__(self, cfg: Optional[SchemeConfig] = None, gn_groups: int = 4, run_seed: Optional[int] = None):
        """
        Initialize factory with all available layer classes.

        Args:
            cfg: Scheme configuration shared by every PBN/pixel-BN layer
            gn_groups: Group count for GroupNorm layers
            run_seed: Training seed mixed into the layers' generators
        """
        self.cfg = cfg or SchemeConfig()
        self.gn_groups = gn_groups
        entropy = self.cfg.rng_seed if run_seed is None else [self.cfg.rng_seed, run_seed]
        # child generators are spawned in creation order so layer draws are reproducible
        self._seeds = np.random.SeedSequence(entropy)
        self.layer_classes: list[type[BaseNorm]] = [
            BatchNorm,
            PatchBatchNorm,
            PixelBatchNorm,
            InstanceNorm,
            LayerNorm,
            GroupNorm,
        ]

    def get_layer_class(self, kind: str) -> type[BaseNorm]:
        for layer_class in self.layer_classes:
            if layer_class.kind == kind:
                logger.debug(f"Selected {layer_class.__name__} for kind '{kind}'")
                return layer_class
        raise ConfigurationError(f"Unknown norm kind '{kind}' (expected one of {', '.join(NORM_KINDS)})")

    def create(self, kind: str, channels: int, state: Optional[NormState] = None, dtype=None) -> BaseNorm:
        """
        Build a layer.

        Args:
            kind: One of NORM_KINDS
            channels: Channel count C
            state: Existing state to wrap (fresh state from the scheme constants when omitted)
            dtype: Dtype for a fresh state's gamma/beta

        Returns:
            Layer instance
        """
        layer_class = self.get_layer_class(kind)
        if state is None:
            state = NormState.create(channels, momentum=self.cfg.momentum, eps=self.cfg.eps, dtype=dtype)

        if layer_class is GroupNorm:
            return GroupNorm(state, self.gn_groups)
        if issubclass(layer_class, PatchBatchNorm):
            rng = np.random.default_rng(self._seeds.spawn(1)[0])
            return layer_class(state, self.cfg, rng=rng)
        return layer_class(state)
