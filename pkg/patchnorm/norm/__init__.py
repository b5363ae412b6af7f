from .state import NormState, RECORD_FIELDS
from .blend import NormPlan, Region, blended_normalize, blended_normalize_backward
from .functional import (
    bn_forward,
    pbn_forward,
    pixel_bn_forward,
    pbn_backward,
    in_forward,
    ln_forward,
    gn_forward,
    bn_plan,
    patch_plan,
)
from .base_norm import BaseNorm
from .batch_norm import BatchNorm, PatchBatchNorm, PixelBatchNorm
from .sample_norm import InstanceNorm, LayerNorm, GroupNorm
from .norm_factory import NormFactory, NORM_KINDS, BATCH_STAT_KINDS, same_family
