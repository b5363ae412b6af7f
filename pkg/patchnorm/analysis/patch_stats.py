"""
Per-patch statistics of images or feature maps.
Measures raw data: biased variance and no stability constant.
"""
import csv
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, TextIO, Union

import numpy as np

from ..errors import DimensionError, UndefinedScoreError
from ..scheme import PatchGrid, Rect
from ..tensor import Tensor

logger = logging.getLogger(__name__)

CSV_HEADER = ("source", "channel", "patch", "row0", "row1", "col0", "col1", "mean", "std")
GLOBAL_PATCH = "global"


@dataclass(frozen=True)
class PatchStatRow:
    source: Union[int, str]
    channel: int
    patch: Union[int, str]  # patch index, or "global"
    rect: Rect
    mean: float
    std: float

    @property
    def is_global(self) -> bool:
        return self.patch == GLOBAL_PATCH

    def as_csv_row(self) -> list[str]:
        return [
            str(self.source),
            str(self.channel),
            str(self.patch),
            str(self.rect.row_start),
            str(self.rect.row_end),
            str(self.rect.col_start),
            str(self.rect.col_end),
            repr(float(self.mean)),
            repr(float(self.std)),
        ]


@dataclass(frozen=True)
class PatchStatReport:
    rows: tuple[PatchStatRow, ...]
    grid: PatchGrid

    def patch_rows(self) -> list[PatchStatRow]:
        return [row for row in self.rows if not row.is_global]

    def global_rows(self) -> list[PatchStatRow]:
        return [row for row in self.rows if row.is_global]

    @property
    def sources(self) -> list[Union[int, str]]:
        return list(dict.fromkeys(row.source for row in self.rows))

    @property
    def channels(self) -> int:
        return 1 + max(row.channel for row in self.rows)

    def write_csv(self, stream: TextIO):
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.rows:
            writer.writerow(row.as_csv_row())


@dataclass(frozen=True)
class DiscrepancyScore:
    """Largest pairwise gap between patch statistics, per channel"""
    mean_gap: np.ndarray
    std_gap: np.ndarray


def analyze_patches(
    f: Union[Tensor, np.ndarray], grid: PatchGrid, source_ids: Optional[Sequence[Union[int, str]]] = None
) -> PatchStatReport:
    """
    Mean and std of every (sample, channel, patch), plus the global row per (sample, channel).

    Args:
        f: Images or feature maps (N, C, H, W); each sample is one source
        grid: Partition valid for f's H x W
        source_ids: Labels for the N sources (sample index by default)

    Returns:
        PatchStatReport
    """
    data = np.asarray(f.data if isinstance(f, Tensor) else f, dtype=np.float64)
    if data.ndim != 4:
        raise DimensionError(f"Expected (N, C, H, W), got shape {data.shape}")
    N, C, H, W = data.shape
    if (grid.height, grid.width) != (H, W):
        raise DimensionError(f"Grid is {grid.height}x{grid.width} but the tensor plane is {H}x{W}")
    if source_ids is None:
        source_ids = list(range(N))
    if len(source_ids) != N:
        raise DimensionError(f"{len(source_ids)} source ids for {N} samples")

    # (P, N, C) statistics per patch
    patch_means = np.stack([data[:, :, r.row_start:r.row_end, r.col_start:r.col_end].mean(axis=(2, 3)) for r in grid.rects])
    patch_stds = np.stack([data[:, :, r.row_start:r.row_end, r.col_start:r.col_end].std(axis=(2, 3)) for r in grid.rects])
    global_means = data.mean(axis=(2, 3))
    global_stds = data.std(axis=(2, 3))
    full = Rect(0, H, 0, W)

    rows = []
    for n, source in enumerate(source_ids):
        for c in range(C):
            for p, rect in enumerate(grid.rects):
                rows.append(PatchStatRow(source, c, p, rect, float(patch_means[p, n, c]), float(patch_stds[p, n, c])))
            rows.append(PatchStatRow(source, c, GLOBAL_PATCH, full, float(global_means[n, c]), float(global_stds[n, c])))

    logger.debug(f"Analyzed {N} sources x {C} channels over {grid.patch_count} patches")
    return PatchStatReport(tuple(rows), grid)


def discrepancy_score(report: PatchStatReport) -> DiscrepancyScore:
    """
    max over patch pairs of |stat_p - stat_q|, taken per channel (worst source).

    Args:
        report: Report with at least two patches

    Returns:
        DiscrepancyScore with one entry per channel for means and for stds
    """
    if report.grid.patch_count < 2:
        raise UndefinedScoreError("Discrepancy needs at least two patches")

    by_key: dict[tuple, list[PatchStatRow]] = {}
    for row in report.patch_rows():
        by_key.setdefault((row.source, row.channel), []).append(row)

    mean_gap = np.zeros(report.channels)
    std_gap = np.zeros(report.channels)
    for (_, c), rows in by_key.items():
        means = [r.mean for r in rows]
        stds = [r.std for r in rows]
        mean_gap[c] = max(mean_gap[c], max(means) - min(means))
        std_gap[c] = max(std_gap[c], max(stds) - min(stds))
    return DiscrepancyScore(mean_gap, std_gap)
