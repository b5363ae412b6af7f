"""
Hyper-parameters of the patch-aware normalization scheme.
"""
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

ALLOWED_PATCH_COUNTS = (1, 2, 4, 9)


class SchemeConfig(BaseModel):
    """Patch counts, splitting mode and blending constants for PBN"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    candidate_set: list[int] = Field([1, 2, 4], description="Admissible patch counts S")
    subset_size: int = Field(2, ge=1, description="How many counts are drawn from S per forward pass (k)")
    split_mode: Literal["equal", "random"] = Field("random", description="Equal-size or random cuts")
    orientation: Literal["auto", "lr", "ud"] = Field(
        "auto", description="P=2 orientation; auto is random in random mode and lr in equal mode"
    )
    lam: float = Field(0.5, ge=0.0, le=1.0, description="Weight of patch statistics in the blend")
    eps: float = Field(1e-5, gt=0.0, description="Constant inside the square root")
    momentum: float = Field(0.1, gt=0.0, lt=1.0, description="Momentum of the accumulated statistics")
    use_global_stats: bool = Field(True, description="Blend with accumulated statistics (False = patch only)")
    rng_seed: int = Field(0, description="Seed for the scheme's random draws")

    @field_validator("candidate_set")
    @classmethod
    def _check_candidates(cls, value: list[int]) -> list[int]:
        if not value:
            raise ValueError("candidate_set must not be empty")
        bad = [p for p in value if p not in ALLOWED_PATCH_COUNTS]
        if bad:
            raise ValueError(f"patch counts {bad} not in {list(ALLOWED_PATCH_COUNTS)}")
        if len(set(value)) != len(value):
            raise ValueError(f"candidate_set has duplicates: {value}")
        return sorted(value)

    @model_validator(mode="after")
    def _check_subset_size(self) -> "SchemeConfig":
        if self.subset_size > len(self.candidate_set):
            raise ValueError(
                f"subset_size {self.subset_size} exceeds |candidate_set| = {len(self.candidate_set)}"
            )
        return self

    @property
    def effective_lambda(self) -> float:
        """Blend weight actually used (1.0 when accumulated statistics are switched off)"""
        return self.lam if self.use_global_stats else 1.0

    def forced(self, patch_count: int, **overrides) -> "SchemeConfig":
        """Copy that always uses one patch count for every channel"""
        values = self.model_dump()
        values.update(candidate_set=[patch_count], subset_size=1, **overrides)
        return SchemeConfig(**values)
