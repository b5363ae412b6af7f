"""
Command-line interface for patch-aware normalization experiments.

Usage:
    python -m patchnorm.cli.patchnorm_cli train --config run.json --out runs/
    python -m patchnorm.cli.patchnorm_cli eval --checkpoint runs/checkpoint_pbn_s0 --out runs/
    python -m patchnorm.cli.patchnorm_cli analyze features.bin --patches 4 --split-mode equal
    python -m patchnorm.cli.patchnorm_cli gradcheck --sizes 2x4x6x6,1x2x3x5

Exit codes: 0 success, 1 check failure, 2 usage/config, 3 numeric divergence, 4 artifact mismatch.
"""
import io
import logging
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np
from pydantic import ValidationError

from .run_config import RunConfig, format_validation_error, load_run_config
from ..analysis import analyze_patches, discrepancy_score
from ..config import reload_settings
from ..errors import ConfigurationError, DimensionError, DivergenceError, LoadError, UndefinedScoreError
from ..harness import (
    ResultTable,
    TrainConfig,
    atomic_write_text,
    dataset_from_config,
    evaluate,
    load_checkpoint,
    read_tensor_file,
    save_checkpoint,
    train,
)
from ..norm import NORM_KINDS
from ..norm.gradcheck import run_suite
from ..scheme import ALLOWED_PATCH_COUNTS, generate_grid
from ..tensor import Tensor

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_MISMATCH = 4


def fail(message: str, code: int):
    click.echo(f"Error: {message}", err=True)
    sys.exit(code)


def resolve_config(config_path: Optional[str]) -> RunConfig:
    if config_path is None:
        return RunConfig()
    try:
        return load_run_config(config_path)
    except ConfigurationError as e:
        fail(str(e), EXIT_USAGE)


def override_train(cfg: TrainConfig, **updates) -> TrainConfig:
    """Rebuild a validated TrainConfig with CLI overrides"""
    updates = {k: v for k, v in updates.items() if v is not None}
    if not updates:
        return cfg
    try:
        return TrainConfig(**{**cfg.model_dump(), **updates})
    except ValidationError as e:
        fail(format_validation_error(e), EXIT_USAGE)


def parse_sizes(text: str) -> list[tuple[int, int, int, int]]:
    """'2x4x6x6,1x2x3x3' -> [(2, 4, 6, 6), (1, 2, 3, 3)]"""
    sizes = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            sizes.append(tuple(int(part) for part in item.lower().split("x")))
        except ValueError as e:
            raise ConfigurationError(f"Cannot parse size '{item}' (expected NxCxHxW)") from e
    return sizes


def write_table(table: ResultTable, out_dir: Path):
    raw = io.StringIO()
    table.write_csv(raw)
    atomic_write_text(out_dir / "results.csv", raw.getvalue())
    aggregate = io.StringIO()
    table.write_aggregate_csv(aggregate)
    atomic_write_text(out_dir / "results_aggregate.csv", aggregate.getvalue())


def display_table(table: ResultTable):
    click.echo()
    click.echo("=" * 70)
    click.echo("Evaluation Results")
    click.echo("=" * 70)
    for norm in table.norms:
        summary = table.summary(norm)
        clean = [table.clean_accuracy(seed, norm) for seed in table.seeds(norm)]
        click.secho(norm, fg="cyan", bold=True)
        click.echo(f"   Clean:      {np.mean(clean):.4f} over {len(clean)} run(s)")
        if summary is not None:
            click.echo(f"   Corruption: {summary.mean:.4f} +- {summary.std:.4f}")
    click.echo("=" * 70)


@click.group()
@click.option("--log-level", default=None, help="Logging level (default: PATCHNORM_LOG_LEVEL or INFO)")
def cli(log_level: Optional[str]):
    """Patch-aware batch normalization: training, evaluation, analysis and gradient checks."""
    try:
        settings = reload_settings()
    except ValidationError as e:
        fail(f"Invalid PATCHNORM_* environment:\n{format_validation_error(e)}", EXIT_USAGE)
    logging.basicConfig(
        level=(log_level or settings.log_level).upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )


@cli.command("train")
@click.option("--config", "config_path", type=str, default=None, help="JSON run config")
@click.option("--out", "out_dir", type=str, default=None, help="Output directory (default: config output_dir)")
@click.option("--seed", type=int, default=None, help="Train a single seed instead of the config's seed list")
@click.option("--norm", type=click.Choice(NORM_KINDS), default=None, help="Normalization layer kind")
def train_command(config_path: Optional[str], out_dir: Optional[str], seed: Optional[int], norm: Optional[str]):
    """Train one model per seed and store checkpoints plus a metrics CSV."""
    run = resolve_config(config_path)
    cfg = override_train(run.train, norm=norm, seeds=[seed] if seed is not None else None)
    out = Path(out_dir or run.output_dir)
    label = cfg.display_label

    try:
        dataset = dataset_from_config(run.data, "train")
    except ConfigurationError as e:
        fail(str(e), EXIT_USAGE)

    metrics = io.StringIO()
    metrics.write("seed,epoch,loss,accuracy\n")
    for run_seed in cfg.seeds:
        try:
            result = train(cfg, dataset, scheme=run.scheme, seed=run_seed)
        except DivergenceError as e:
            fail(f"Run diverged: {e}", EXIT_DIVERGED)
        except ConfigurationError as e:
            fail(str(e), EXIT_USAGE)

        for epoch, (loss, acc) in enumerate(zip(result.losses, result.accuracies), 1):
            metrics.write(f"{run_seed},{epoch},{loss:.8f},{acc:.6f}\n")
        checkpoint = result.model.to_checkpoint(label=label, train=cfg.model_dump(), data=run.data.model_dump())
        path = save_checkpoint(out / f"checkpoint_{label}_s{run_seed}", checkpoint)
        click.echo(f"Checkpoint: {path}")

    metrics_path = out / f"metrics_{label}.csv"
    atomic_write_text(metrics_path, metrics.getvalue())
    click.echo(f"Metrics:    {metrics_path}")


@cli.command("eval")
@click.option("--checkpoint", "checkpoints", multiple=True, required=True, help="Checkpoint path (repeatable)")
@click.option("--config", "config_path", type=str, default=None, help="JSON run config")
@click.option("--out", "out_dir", type=str, default=None, help="Output directory (default: config output_dir)")
@click.option("--norm", type=click.Choice(NORM_KINDS), default=None, help="Evaluate under this norm label")
def eval_command(checkpoints: tuple[str, ...], config_path: Optional[str], out_dir: Optional[str], norm: Optional[str]):
    """Evaluate checkpoints on the clean test split and the corruption suite."""
    run = resolve_config(config_path)
    out = Path(out_dir or run.output_dir)
    expected_width = run.train.width if config_path is not None else None

    try:
        dataset = dataset_from_config(run.data, "test")
    except ConfigurationError as e:
        fail(str(e), EXIT_USAGE)

    tables = []
    for path in checkpoints:
        try:
            checkpoint = load_checkpoint(path)
            tables.append(evaluate(checkpoint, run.suite, dataset, norm=norm, scheme=run.scheme,
                                   expected_width=expected_width))
        except (LoadError, DimensionError) as e:
            fail(f"{path}: {e}", EXIT_MISMATCH)

    table = ResultTable.merge(tables)
    write_table(table, out)
    display_table(table)
    click.echo(f"Results: {out / 'results.csv'}")


@cli.command("analyze")
@click.argument("tensor_file", type=str)
@click.option("--patches", type=click.Choice([str(p) for p in ALLOWED_PATCH_COUNTS]), default="4",
              help="Patch count P (default: 4)")
@click.option("--split-mode", type=click.Choice(["random", "equal"]), default="equal",
              help="Cut placement (default: equal)")
@click.option("--orientation", type=click.Choice(["auto", "lr", "ud"]), default="auto",
              help="Cut direction for P=2 (default: auto)")
@click.option("--seed", type=int, default=0, help="Seed for random cuts (default: 0)")
@click.option("--out", "out_dir", type=str, default=None, help="Write patch_stats.csv here instead of stdout")
@click.option("--checkpoint", type=str, default=None, help="Analyze the model's first-conv features of the input")
def analyze_command(tensor_file: str, patches: str, split_mode: str, orientation: str, seed: int,
                    out_dir: Optional[str], checkpoint: Optional[str]):
    """Per-patch mean/std of a stored (N, C, H, W) tensor."""
    try:
        data, _ = read_tensor_file(tensor_file)
    except LoadError as e:
        fail(str(e), EXIT_USAGE)
    if data.ndim != 4:
        fail(f"{tensor_file}: expected a rank-4 (N, C, H, W) tensor, got shape {data.shape}", EXIT_USAGE)

    if checkpoint is not None:
        from ..harness import TinyCNN
        try:
            model = TinyCNN.from_checkpoint(load_checkpoint(checkpoint), dtype=np.float64)
            data = model.first_conv_features(Tensor(data, dtype=np.float64)).data
        except (LoadError, DimensionError) as e:
            fail(f"{checkpoint}: {e}", EXIT_MISMATCH)

    _, _, height, width = data.shape
    grid = generate_grid(height, width, int(patches), split_mode, np.random.default_rng(seed), orientation)
    report = analyze_patches(data, grid)

    buffer = io.StringIO()
    report.write_csv(buffer)
    if out_dir is None:
        click.echo(buffer.getvalue(), nl=False)
    else:
        path = Path(out_dir) / "patch_stats.csv"
        atomic_write_text(path, buffer.getvalue())
        click.echo(f"Patch statistics: {path}", err=True)

    try:
        score = discrepancy_score(report)
        click.echo(f"Max patch mean gap {score.mean_gap.max():.6f}, std gap {score.std_gap.max():.6f}", err=True)
    except UndefinedScoreError:
        pass


@cli.command("gradcheck")
@click.option("--seed", type=int, default=0, help="Seed for inputs and scheme draws (default: 0)")
@click.option("--sizes", type=str, default="2x4x6x6", help="Comma-separated NxCxHxW sizes, each <= 2x4x6x6")
@click.option("--tolerance", type=float, default=1e-4, help="Maximum relative error (default: 1e-4)")
def gradcheck_command(seed: int, sizes: str, tolerance: float):
    """Finite-difference check of every normalization layer's backward pass."""
    try:
        shapes = parse_sizes(sizes)
        results = run_suite(shapes, seed=seed, tolerance=tolerance)
    except ConfigurationError as e:
        fail(str(e), EXIT_USAGE)

    failures = [r for r in results if not r.passed]
    for r in results:
        status = click.style("ok", fg="green") if r.passed else click.style("FAIL", fg="red", bold=True)
        shape = "x".join(str(s) for s in r.shape)
        click.echo(f"{r.case.label:<20} {shape:<10} {r.max_error:.3e}  {status}")

    if failures:
        worst = max(failures, key=lambda r: r.max_error if np.isfinite(r.max_error) else np.inf)
        fail(f"{len(failures)}/{len(results)} checks failed; worst: {worst.case.label} "
             f"{'x'.join(str(s) for s in worst.shape)} error {worst.max_error:.3e}", EXIT_CHECK_FAILED)
    click.echo(f"All {len(results)} gradient checks passed")


if __name__ == "__main__":
    cli()
