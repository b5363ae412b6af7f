"""
Corruption-suite evaluation and result tables.
"""
import csv
import logging
from dataclasses import dataclass
from typing import Iterable, Optional, TextIO

import numpy as np

from .corruptions import DomainSuite
from .dataset import SyntheticDataset
from .model import TinyCNN
from .storage import Checkpoint
from ..errors import LoadError
from ..norm import same_family
from ..scheme import SchemeConfig

logger = logging.getLogger(__name__)

CLEAN = "clean"
AVERAGE = "avg"
RAW_HEADER = ("seed", "norm", "kind", "severity", "accuracy")
AGGREGATE_HEADER = ("norm", "kind", "severity", "mean", "std", "runs")


@dataclass(frozen=True)
class ResultRow:
    seed: int
    norm: str
    kind: str
    severity: int
    accuracy: float

    @property
    def sort_key(self) -> tuple:
        return (self.norm, self.seed, self.kind != CLEAN, self.kind, self.severity)


@dataclass(frozen=True)
class AggregateRow:
    norm: str
    kind: str
    severity: int
    mean: float
    std: float
    runs: int


def _mean_std(values: list[float]) -> tuple[float, float]:
    array = np.asarray(values, dtype=np.float64)
    std = float(array.std(ddof=1)) if len(array) > 1 else 0.0
    return float(array.mean()), std


class ResultTable:
    """Raw accuracy rows per (seed, norm, domain) with derived aggregates"""

    def __init__(self, rows: Iterable[ResultRow] = ()):
        self.rows: list[ResultRow] = sorted(rows, key=lambda r: r.sort_key)

    def __len__(self) -> int:
        return len(self.rows)

    @classmethod
    def merge(cls, tables: Iterable["ResultTable"]) -> "ResultTable":
        return cls(row for table in tables for row in table.rows)

    @property
    def norms(self) -> list[str]:
        return sorted({r.norm for r in self.rows})

    def seeds(self, norm: str) -> list[int]:
        return sorted({r.seed for r in self.rows if r.norm == norm})

    def clean_accuracy(self, seed: int, norm: str) -> float:
        for r in self.rows:
            if r.seed == seed and r.norm == norm and r.kind == CLEAN:
                return r.accuracy
        raise KeyError(f"No clean row for seed {seed}, norm {norm}")

    def corruption_average(self, seed: int, norm: str) -> float:
        """Mean accuracy over all (kind, severity) cells of one run"""
        cells = [r.accuracy for r in self.rows if r.seed == seed and r.norm == norm and r.kind != CLEAN]
        if not cells:
            raise KeyError(f"No corruption rows for seed {seed}, norm {norm}")
        return float(np.mean(cells))

    def aggregates(self) -> list[AggregateRow]:
        """Mean +- sample std over seeds for every domain, plus the corruption average"""
        out = []
        for norm in self.norms:
            cells: dict[tuple[str, int], list[float]] = {}
            for r in self.rows:
                if r.norm == norm:
                    cells.setdefault((r.kind, r.severity), []).append(r.accuracy)
            keys = sorted(cells, key=lambda k: (k[0] != CLEAN, k[0], k[1]))
            for kind, severity in keys:
                mean, std = _mean_std(cells[(kind, severity)])
                out.append(AggregateRow(norm, kind, severity, mean, std, len(cells[(kind, severity)])))

            averages = [self.corruption_average(seed, norm) for seed in self.seeds(norm)
                        if any(r.kind != CLEAN for r in self.rows if r.norm == norm and r.seed == seed)]
            if averages:
                mean, std = _mean_std(averages)
                out.append(AggregateRow(norm, AVERAGE, 0, mean, std, len(averages)))
        return out

    def summary(self, norm: str) -> Optional[AggregateRow]:
        """The corruption-average aggregate row of one norm label"""
        for row in self.aggregates():
            if row.norm == norm and row.kind == AVERAGE:
                return row
        return None

    def write_csv(self, stream: TextIO):
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(RAW_HEADER)
        for r in self.rows:
            writer.writerow([r.seed, r.norm, r.kind, r.severity, f"{r.accuracy:.6f}"])

    def write_aggregate_csv(self, stream: TextIO):
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(AGGREGATE_HEADER)
        for a in self.aggregates():
            writer.writerow([a.norm, a.kind, a.severity, f"{a.mean:.6f}", f"{a.std:.6f}", a.runs])


def accuracy(model: TinyCNN, images: np.ndarray, labels: np.ndarray, batch_size: int = 256) -> float:
    if len(labels) == 0:
        return 0.0
    return float((model.predict(images, batch_size) == labels).mean())


def evaluate_model(
    model: TinyCNN,
    dataset: SyntheticDataset,
    suite: DomainSuite,
    seed: int,
    label: str,
    batch_size: int = 256,
) -> ResultTable:
    """
    Accuracy on the clean test split and on every corruption cell, in eval mode.

    Args:
        model: Trained model (switched to eval mode here)
        dataset: Clean test split
        suite: Corruption kinds and severities
        seed: Training seed of the model (table key)
        label: Norm label (table key)
        batch_size: Inference batch size

    Returns:
        ResultTable for this single run
    """
    model.eval()
    rows = [ResultRow(seed, label, CLEAN, 0, accuracy(model, dataset.images, dataset.labels, batch_size))]
    for kind, severity in suite.cells():
        corrupted = suite.corrupt_cell(dataset.images, kind, severity)
        rows.append(ResultRow(seed, label, kind, severity, accuracy(model, corrupted, dataset.labels, batch_size)))

    table = ResultTable(rows)
    if suite.cells():
        logger.info(f"[{label} seed {seed}] clean={rows[0].accuracy:.3f} "
                    f"corruption avg={table.corruption_average(seed, label):.3f}")
    return table


def evaluate(
    checkpoint: Checkpoint,
    suite: DomainSuite,
    dataset: SyntheticDataset,
    norm: Optional[str] = None,
    scheme: Optional[SchemeConfig] = None,
    label: Optional[str] = None,
    expected_width: Optional[int] = None,
) -> ResultTable:
    """
    Evaluate a stored model on the clean split and the corruption suite.

    Args:
        checkpoint: Loaded checkpoint
        suite: Corruption kinds and severities
        dataset: Clean test split
        norm: Norm label to evaluate under (must share the checkpoint's state family)
        scheme: Scheme configuration (irrelevant in eval mode, accepted for symmetry with training)
        label: Table label (defaults to the norm label, then the checkpoint's label)
        expected_width: Width the caller's config expects; mismatch is a load error

    Returns:
        ResultTable

    Raises:
        LoadError: Checkpoint and requested model do not match
    """
    stored_norm = checkpoint.meta.get("norm")
    if norm is not None and stored_norm is not None and not same_family(norm, stored_norm):
        raise LoadError(f"Checkpoint trained with '{stored_norm}' cannot be evaluated as '{norm}'")
    if expected_width is not None and int(checkpoint.meta.get("width", -1)) != expected_width:
        raise LoadError(f"Checkpoint width {checkpoint.meta.get('width')} does not match config width {expected_width}")
    if checkpoint.meta.get("classes") is not None and int(checkpoint.meta["classes"]) != dataset.classes:
        raise LoadError(f"Checkpoint has {checkpoint.meta['classes']} classes, dataset has {dataset.classes}")
    if checkpoint.meta.get("image_size") is not None and int(checkpoint.meta["image_size"]) != dataset.images.shape[-1]:
        raise LoadError(f"Checkpoint expects {checkpoint.meta['image_size']}px images, "
                        f"dataset has {dataset.images.shape[-1]}px")

    model = TinyCNN.from_checkpoint(checkpoint, norm_kind=norm, scheme=scheme, dtype=dataset.images.dtype)
    seed = int(checkpoint.meta.get("seed", 0))
    label = label or norm or checkpoint.meta.get("label") or stored_norm
    return evaluate_model(model, dataset, suite, seed, label)
