"""
Multi-seed comparison pipeline for normalization layers under domain shift.

Trains every variant on the clean synthetic domain, evaluates on the corruption suite,
and reports whether patch-aware normalization keeps its ordering over plain BN.

Variants:
- bn, pbn, pixel_bn, in, ln, gn      plain layer kinds
- pbn_nogs                           PBN blending patch statistics only (no global statistics)
- pbn@<lam>                          PBN with a fixed blend weight (lambda sweep)

Usage:
    python -m patchnorm.main                                  # bn, pbn, pbn_nogs over 5 seeds
    python -m patchnorm.main --variants bn pbn in ln gn       # layer comparison
    python -m patchnorm.main --lambdas 0 0.25 0.5 0.75 1      # lambda sweep
    python -m patchnorm.main --config run.json --out runs/compare
"""
import argparse
import io
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from patchnorm.cli.run_config import RunConfig, load_run_config
from patchnorm.config import settings
from patchnorm.errors import ConfigurationError, DivergenceError
from patchnorm.harness import (
    ResultTable,
    TrainConfig,
    atomic_write_text,
    dataset_from_config,
    evaluate_model,
    train,
)
from patchnorm.norm import NORM_KINDS
from patchnorm.scheme import SchemeConfig

# Configure logging
logging.basicConfig(
    level=settings.log_level.upper(),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)

DEFAULT_VARIANTS = ("bn", "pbn", "pbn_nogs")
CLEAN_GAP_TOLERANCE = 0.02


@dataclass(frozen=True)
class OrderingCheck:
    name: str
    margin: float
    holds: bool


@dataclass(frozen=True)
class Variant:
    label: str
    train: TrainConfig
    scheme: SchemeConfig


def resolve_variant(name: str, base_train: TrainConfig, base_scheme: SchemeConfig) -> Variant:
    """
    Turn a variant name into its training and scheme configuration.

    Raises:
        ConfigurationError: Unknown name or out-of-range lambda
    """
    scheme_values = base_scheme.model_dump()
    train_values = {**base_train.model_dump(), "label": name}

    if name == "pbn_nogs":
        norm = "pbn"
        scheme_values["use_global_stats"] = False
    elif name.startswith("pbn@"):
        norm = "pbn"
        try:
            scheme_values["lam"] = float(name.split("@", 1)[1])
        except ValueError as e:
            raise ConfigurationError(f"Cannot parse lambda in variant '{name}'") from e
    elif name in NORM_KINDS:
        norm = name
    else:
        raise ConfigurationError(f"Unknown variant '{name}'")

    try:
        return Variant(name, TrainConfig(**{**train_values, "norm": norm}), SchemeConfig(**scheme_values))
    except ValueError as e:
        raise ConfigurationError(f"Variant '{name}': {e}") from e


class ExperimentRunner:
    """Orchestrates training and evaluation of several variants over several seeds"""

    def __init__(self, run: RunConfig, variants: list[Variant], seeds: list[int], out_dir: Path):
        """
        Args:
            run: Base run configuration (data, suite)
            variants: Variants to compare
            seeds: Training seeds shared by every variant
            out_dir: Where the result CSVs go
        """
        self.run = run
        self.variants = variants
        self.seeds = seeds
        self.out_dir = out_dir
        self.table = ResultTable()

        self.stats = {
            'variants': len(variants),
            'runs': 0,
            'completed': 0,
            'diverged': 0,
        }

    def run_all(self):
        """Main comparison loop"""
        logger.info("=" * 70)
        logger.info("Patch-aware Normalization - Domain Shift Comparison")
        logger.info("=" * 70)

        logger.info("\n[1] Generating synthetic domains...")
        train_set = dataset_from_config(self.run.data, "train")
        test_set = dataset_from_config(self.run.data, "test")
        logger.info(f"Suite: {len(self.run.suite.kinds)} corruption kinds x {len(self.run.suite.severities)} severities")

        logger.info(f"\n[2] Training and evaluating {len(self.variants)} variant(s) over seeds {self.seeds}...\n")
        tables = []
        for i, variant in enumerate(self.variants, 1):
            logger.info(f"[{i}/{len(self.variants)}] {variant.label}")
            for seed in self.seeds:
                self.stats['runs'] += 1
                try:
                    result = train(variant.train, train_set, scheme=variant.scheme, seed=seed)
                except DivergenceError as e:
                    logger.error(f"  Diverged: {e}")
                    self.stats['diverged'] += 1
                    continue
                tables.append(evaluate_model(result.model, test_set, self.run.suite, seed, variant.label))
                self.stats['completed'] += 1

        self.table = ResultTable.merge(tables)
        logger.info("\n[3] Writing results...")
        self.write_results()

    def write_results(self):
        raw = io.StringIO()
        self.table.write_csv(raw)
        atomic_write_text(self.out_dir / "results.csv", raw.getvalue())
        aggregate = io.StringIO()
        self.table.write_aggregate_csv(aggregate)
        atomic_write_text(self.out_dir / "results_aggregate.csv", aggregate.getvalue())
        logger.info(f"Results written to {self.out_dir}")

    def ordering_checks(self) -> list[OrderingCheck]:
        """Directional checks against BN, reported rather than asserted"""
        checks = []
        bn = self.table.summary("bn")
        if bn is None:
            return checks
        for label in ("pbn", "pbn_nogs"):
            other = self.table.summary(label)
            if other is not None:
                checks.append(OrderingCheck(f"{label} >= bn on corruption average", other.mean - bn.mean,
                                            other.mean >= bn.mean))

        if "pbn" in self.table.norms:
            common = [s for s in self.table.seeds("bn") if s in self.table.seeds("pbn")]
            if common:
                gap = sum(self.table.clean_accuracy(s, "pbn") - self.table.clean_accuracy(s, "bn")
                          for s in common) / len(common)
                checks.append(OrderingCheck("clean accuracy pbn - bn within 2 points", gap,
                                            abs(gap) <= CLEAN_GAP_TOLERANCE))
        return checks

    def ordering_report(self) -> list[str]:
        return [f"{check.name}: {'holds' if check.holds else 'does NOT hold'} (margin {check.margin:+.4f})"
                for check in self.ordering_checks()]

    def print_summary(self):
        """Print comparison statistics"""
        logger.info("\n" + "=" * 70)
        logger.info("Comparison Summary")
        logger.info("=" * 70)
        logger.info(f"Variants:            {self.stats['variants']}")
        logger.info(f"Runs:                {self.stats['runs']}")
        logger.info(f"Completed:           {self.stats['completed']}")
        logger.info(f"Diverged:            {self.stats['diverged']}")
        logger.info("")
        for variant in self.variants:
            summary = self.table.summary(variant.label)
            if summary is not None:
                logger.info(f"{variant.label:<20} corruption avg {summary.mean:.4f} +- {summary.std:.4f} "
                            f"({summary.runs} runs)")
        for line in self.ordering_report():
            logger.info(line)
        logger.info("=" * 70)


def main(argv: Optional[list[str]] = None) -> int:
    """Main entry point"""
    parser = argparse.ArgumentParser(
        description="Compare normalization layers on the synthetic corruption suite"
    )
    parser.add_argument('--config', type=str, default=None, help='JSON run config used as the base')
    parser.add_argument('--variants', nargs='+', default=list(DEFAULT_VARIANTS),
                        help='Variants: bn, pbn, pbn_nogs, pixel_bn, in, ln, gn, pbn@<lambda>')
    parser.add_argument('--lambdas', nargs='+', type=float, default=[],
                        help='Add a pbn@<lambda> variant for each value')
    parser.add_argument('--seeds', nargs='+', type=int, default=None,
                        help='Training seeds (default: the config\'s seed list)')
    parser.add_argument('--epochs', type=int, default=None, help='Override epochs')
    parser.add_argument('--norm-sites', type=int, default=None,
                        help='Leading blocks that use the variant\'s layer (the rest use BN)')
    parser.add_argument('--out', type=str, default=None, help='Output directory')

    args = parser.parse_args(argv)

    try:
        run = load_run_config(args.config) if args.config else RunConfig()
        base_train = run.train
        overrides = {k: v for k, v in {"epochs": args.epochs, "norm_sites": args.norm_sites}.items() if v is not None}
        if overrides:
            base_train = TrainConfig(**{**base_train.model_dump(), **overrides})
        names = list(dict.fromkeys(args.variants + [f"pbn@{lam:g}" for lam in args.lambdas]))
        variants = [resolve_variant(name, base_train, run.scheme) for name in names]
    except (ConfigurationError, ValueError) as e:
        logger.error(f"Invalid configuration: {e}")
        return 2

    seeds = args.seeds or list(base_train.seeds)
    out_dir = Path(args.out or Path(run.output_dir) / "compare")

    runner = ExperimentRunner(run, variants, seeds, out_dir)
    runner.run_all()
    runner.print_summary()

    return 3 if runner.stats['diverged'] else 0


if __name__ == '__main__':
    sys.exit(main())
