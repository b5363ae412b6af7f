"""
Rectangular partitions of the H x W plane.
Random cuts fall in [ceil(D/3), floor(2D/3)] for 2 pieces and in [ceil(D/5), floor(2D/5)],
[ceil(3D/5), floor(4D/5)] for 3 pieces; an axis whose interval is empty is left uncut.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from ..errors import ConfigurationError, DimensionError

logger = logging.getLogger(__name__)

SplitMode = Literal["equal", "random"]
Orientation = Literal["auto", "lr", "ud"]

# patch count -> (pieces along rows, pieces along columns); P=2 is resolved by orientation
_LAYOUTS = {1: (1, 1), 4: (2, 2), 9: (3, 3)}


@dataclass(frozen=True)
class Rect:
    """Half-open rectangle [row_start, row_end) x [col_start, col_end)"""
    row_start: int
    row_end: int
    col_start: int
    col_end: int

    @property
    def area(self) -> int:
        return (self.row_end - self.row_start) * (self.col_end - self.col_start)

    def pixel_indices(self, width: int) -> np.ndarray:
        """Flat (row-major) indices of the covered pixels, ascending"""
        rows = np.arange(self.row_start, self.row_end)
        cols = np.arange(self.col_start, self.col_end)
        return (rows[:, None] * width + cols[None, :]).reshape(-1)


@dataclass(frozen=True)
class PatchGrid:
    """Exact partition of an H x W plane into rectangles"""
    height: int
    width: int
    rects: tuple[Rect, ...]
    requested_count: int
    row_cuts: tuple[int, ...] = field(default=())
    col_cuts: tuple[int, ...] = field(default=())

    @property
    def patch_count(self) -> int:
        """Effective P (smaller than requested_count after a fallback)"""
        return len(self.rects)

    @property
    def degraded(self) -> bool:
        return self.patch_count != self.requested_count

    def coverage(self) -> np.ndarray:
        """How many rects cover each pixel (all ones for a valid grid)"""
        counts = np.zeros((self.height, self.width), dtype=np.int64)
        for rect in self.rects:
            counts[rect.row_start:rect.row_end, rect.col_start:rect.col_end] += 1
        return counts

    def is_exact_partition(self) -> bool:
        return all(r.area > 0 for r in self.rects) and bool(np.all(self.coverage() == 1))


def cut_interval(length: int, pieces: int, position: int = 0) -> tuple[int, int]:
    """
    Inclusive integer range for one random cut.

    Args:
        length: Extent D of the axis being cut
        pieces: 2 or 3 pieces along the axis
        position: Which cut (0 or 1; only 3 pieces have a second cut)

    Returns:
        (low, high); empty when low > high
    """
    if pieces == 2:
        return math.ceil(length / 3), (2 * length) // 3
    if pieces == 3:
        if position == 0:
            return math.ceil(length / 5), (2 * length) // 5
        return math.ceil(3 * length / 5), (4 * length) // 5
    raise ConfigurationError(f"No cut interval for {pieces} pieces")


def _axis_cuts(length: int, pieces: int, split_mode: SplitMode, rng: np.random.Generator) -> tuple[int, ...]:
    """Cut positions along one axis, or () when the axis is too short for the request"""
    if pieces == 1:
        return ()

    if split_mode == "equal":
        cuts = tuple((k * length) // pieces for k in range(1, pieces))
    else:
        bounds = [cut_interval(length, pieces, k) for k in range(pieces - 1)]
        if any(low > high for low, high in bounds):
            return ()
        cuts = tuple(int(rng.integers(low, high + 1)) for low, high in bounds)

    edges = (0, *cuts, length)
    if any(a >= b for a, b in zip(edges, edges[1:])):
        return ()
    return cuts


def _resolve_orientation(orientation: Orientation, split_mode: SplitMode, rng: np.random.Generator) -> str:
    if orientation != "auto":
        return orientation
    if split_mode == "random":
        return "lr" if rng.integers(2) == 0 else "ud"
    return "lr"


def generate_grid(
    height: int,
    width: int,
    patch_count: int,
    split_mode: SplitMode,
    rng: np.random.Generator,
    orientation: Orientation = "auto",
) -> PatchGrid:
    """
    Draw a partition of the H x W plane into patch_count rectangles.

    Args:
        height: H
        width: W
        patch_count: Requested P, one of 1, 2, 4, 9
        split_mode: "equal" or "random"
        rng: Generator that supplies every random draw
        orientation: For P=2 only: "lr" (left/right), "ud" (up/down) or "auto"

    Returns:
        PatchGrid; fewer patches than requested when an axis is too short
    """
    if height < 1 or width < 1:
        raise DimensionError(f"Plane must be at least 1x1, got {height}x{width}")

    if patch_count == 2:
        side = _resolve_orientation(orientation, split_mode, rng)
        row_pieces, col_pieces = (1, 2) if side == "lr" else (2, 1)
    elif patch_count in _LAYOUTS:
        row_pieces, col_pieces = _LAYOUTS[patch_count]
    else:
        raise ConfigurationError(f"Unsupported patch count {patch_count}")

    row_cuts = _axis_cuts(height, row_pieces, split_mode, rng)
    col_cuts = _axis_cuts(width, col_pieces, split_mode, rng)

    row_edges = (0, *row_cuts, height)
    col_edges = (0, *col_cuts, width)
    rects = tuple(
        Rect(r0, r1, c0, c1)
        for r0, r1 in zip(row_edges, row_edges[1:])
        for c0, c1 in zip(col_edges, col_edges[1:])
    )

    grid = PatchGrid(height, width, rects, patch_count, row_cuts, col_cuts)
    if grid.degraded:
        logger.debug(f"Patch count {patch_count} degraded to {grid.patch_count} on a {height}x{width} plane")
    return grid
