"""
Per-pass patch-count subset and per-channel patch-count assignment.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .scheme_config import SchemeConfig
from ..errors import ConfigurationError, DimensionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChannelGroup:
    """Channels that share one patch count"""
    patch_count: int
    channels: np.ndarray


@dataclass(frozen=True)
class ChannelGrouping:
    """Partition of channel indices by drawn patch count, ordered by patch count"""
    groups: tuple[ChannelGroup, ...]
    channel_count: int

    @property
    def group_count(self) -> int:
        return len(self.groups)

    @classmethod
    def from_draws(cls, draws: np.ndarray) -> "ChannelGrouping":
        """Group channel indices by equal drawn value"""
        draws = np.asarray(draws, dtype=np.int64)
        groups = tuple(
            ChannelGroup(int(p), np.flatnonzero(draws == p))
            for p in np.unique(draws)
        )
        return cls(groups, len(draws))

    def as_dict(self) -> dict[int, list[int]]:
        return {g.patch_count: g.channels.tolist() for g in self.groups}


def draw_subset(cfg: SchemeConfig, rng: np.random.Generator) -> frozenset[int]:
    """
    Uniformly draw subset_size patch counts from the candidate set, without replacement.

    Args:
        cfg: Scheme configuration (S and k)
        rng: Random generator

    Returns:
        Set of k patch counts; S itself when k == |S|
    """
    candidates = sorted(cfg.candidate_set)
    k = cfg.subset_size
    if k > len(candidates):
        raise ConfigurationError(f"subset_size {k} exceeds |S| = {len(candidates)}")
    if k == len(candidates):
        return frozenset(candidates)
    picked = rng.choice(len(candidates), size=k, replace=False)
    return frozenset(candidates[i] for i in picked)


def assign_channels(channel_count: int, subset: frozenset[int], rng: np.random.Generator) -> ChannelGrouping:
    """
    Draw a patch count for every channel independently and uniformly from subset.

    Args:
        channel_count: C
        subset: Patch counts available for this pass
        rng: Random generator

    Returns:
        ChannelGrouping with G <= |subset| groups
    """
    if channel_count < 1:
        raise DimensionError(f"Need at least one channel, got {channel_count}")
    if not subset:
        raise ConfigurationError("Cannot assign channels from an empty subset")
    options = np.array(sorted(subset), dtype=np.int64)
    if len(options) == 1:
        draws = np.full(channel_count, options[0])
    else:
        draws = options[rng.integers(len(options), size=channel_count)]
    return ChannelGrouping.from_draws(draws)
