from .patch_stats import (
    PatchStatRow,
    PatchStatReport,
    DiscrepancyScore,
    analyze_patches,
    discrepancy_score,
    CSV_HEADER,
    GLOBAL_PATCH,
)
