"""
Per-sample normalization baselines: instance, layer and group normalization.
These keep no accumulated statistics and behave the same in train and eval mode.
"""
from .base_norm import BaseNorm
from .functional import gn_forward, in_forward, ln_forward
from .state import NormState
from ..errors import ConfigurationError


class InstanceNorm(BaseNorm):
    kind = "in"

    def forward(self, x, rng=None):
        return in_forward(x, self.state)


class LayerNorm(BaseNorm):
    kind = "ln"

    def forward(self, x, rng=None):
        return ln_forward(x, self.state)


class GroupNorm(BaseNorm):
    """Group normalization over `groups` blocks of channels"""

    kind = "gn"

    def __init__(self, state: NormState, groups: int):
        if groups < 1 or state.channels % groups != 0:
            raise ConfigurationError(f"GroupNorm groups={groups} must divide {state.channels} channels")
        super().__init__(state)
        self.groups = groups

    def forward(self, x, rng=None):
        return gn_forward(x, self.state, self.groups)
