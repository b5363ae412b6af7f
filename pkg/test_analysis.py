"""
Tests for per-patch statistics and the discrepancy score.
"""
import csv
import io
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from patchnorm.analysis import CSV_HEADER, GLOBAL_PATCH, analyze_patches, discrepancy_score
from patchnorm.errors import DimensionError, UndefinedScoreError
from patchnorm.scheme import generate_grid
from patchnorm.tensor import Tensor


def equal_grid(height, width, patch_count):
    return generate_grid(height, width, patch_count, "equal", np.random.default_rng(0))


def two_tone() -> np.ndarray:
    image = np.zeros((1, 1, 4, 4))
    image[:, :, 2:, :] = 1.0
    return image


def test_constant_image():
    report = analyze_patches(np.full((2, 3, 6, 6), 0.25), equal_grid(6, 6, 4))
    assert len(report.rows) == 2 * 3 * (4 + 1)
    assert {row.mean for row in report.rows} == {0.25}
    assert {row.std for row in report.rows} == {0.0}
    score = discrepancy_score(report)
    np.testing.assert_array_equal(score.mean_gap, 0.0)
    np.testing.assert_array_equal(score.std_gap, 0.0)


def test_two_tone_image():
    report = analyze_patches(two_tone(), equal_grid(4, 4, 4))
    means = {row.patch: row.mean for row in report.rows}
    assert means[0] == means[1] == 0.0
    assert means[2] == means[3] == 1.0
    assert means[GLOBAL_PATCH] == 0.5
    assert discrepancy_score(report).mean_gap[0] == 1.0


def test_identical_patches_have_no_discrepancy():
    block = np.random.default_rng(0).normal(size=(1, 2, 3, 3))
    tiled = np.tile(block, (1, 1, 2, 2))
    score = discrepancy_score(analyze_patches(tiled, equal_grid(6, 6, 4)))
    np.testing.assert_allclose(score.mean_gap, 0.0, atol=1e-15)
    np.testing.assert_allclose(score.std_gap, 0.0, atol=1e-15)


def test_single_patch_matches_global_and_has_no_score():
    data = np.random.default_rng(1).normal(size=(1, 2, 5, 5))
    report = analyze_patches(data, equal_grid(5, 5, 1))
    for patch_row, global_row in zip(report.patch_rows(), report.global_rows()):
        assert patch_row.mean == pytest.approx(global_row.mean, rel=1e-12)
        assert patch_row.std == pytest.approx(global_row.std, rel=1e-12)
    with pytest.raises(UndefinedScoreError):
        discrepancy_score(report)


def test_area_weighted_means_recompose_global_mean():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        N, C, H, W = (int(v) for v in rng.integers(1, 9, size=4))
        data = rng.normal(rng.normal(), 2.0, size=(N, C, H, W))
        grid = generate_grid(H, W, int(rng.choice([1, 2, 4, 9])), "random", rng)
        report = analyze_patches(data, grid)

        recomposed: dict[tuple, float] = {}
        for row in report.patch_rows():
            key = (row.source, row.channel)
            recomposed[key] = recomposed.get(key, 0.0) + row.rect.area / (H * W) * row.mean
        for row in report.global_rows():
            assert abs(recomposed[(row.source, row.channel)] - row.mean) < 1e-6


def test_matches_loop_oracle():
    rng = np.random.default_rng(3)
    for shape in [(1, 1, 4, 4), (2, 3, 5, 7), (3, 4, 8, 8)]:
        data = rng.normal(size=shape)
        grid = generate_grid(shape[2], shape[3], 4, "random", rng)
        report = analyze_patches(Tensor(data), grid)

        for row in report.rows:
            values = [
                data[row.source, row.channel, h, w]
                for h in range(row.rect.row_start, row.rect.row_end)
                for w in range(row.rect.col_start, row.rect.col_end)
            ]
            mean = sum(values) / len(values)
            std = np.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
            assert abs(row.mean - mean) < 1e-10
            assert abs(row.std - std) < 1e-10


def test_grid_must_match_plane():
    with pytest.raises(DimensionError):
        analyze_patches(np.zeros((1, 1, 4, 4)), equal_grid(4, 5, 2))


def test_source_ids_must_match_batch():
    with pytest.raises(DimensionError):
        analyze_patches(np.zeros((2, 1, 4, 4)), equal_grid(4, 4, 2), source_ids=["a"])


def test_csv_layout():
    report = analyze_patches(two_tone(), equal_grid(4, 4, 4), source_ids=["img"])
    buffer = io.StringIO()
    report.write_csv(buffer)
    rows = list(csv.reader(io.StringIO(buffer.getvalue())))
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 1 + 5
    assert rows[1][:7] == ["img", "0", "0", "0", "2", "0", "2"]
    assert rows[-1][2] == GLOBAL_PATCH
    assert float(rows[-1][7]) == 0.5
