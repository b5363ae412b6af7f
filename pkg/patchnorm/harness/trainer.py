"""
SGD training of the tiny CNN on the clean synthetic domain.
"""
import logging
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .dataset import SyntheticDataset
from .model import BLOCKS, TinyCNN
from ..errors import DivergenceError
from ..norm import BATCH_STAT_KINDS
from ..scheme import SchemeConfig
from ..tensor import Tensor, softmax_cross_entropy

logger = logging.getLogger(__name__)

NormKind = Literal["bn", "pbn", "pixel_bn", "in", "ln", "gn"]


class TrainConfig(BaseModel):
    """Optimisation and model settings for one training run per seed"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    norm: NormKind = Field("bn", description="Normalization layer kind")
    label: Optional[str] = Field(None, description="Name used in result tables (defaults to norm)")
    epochs: int = Field(10, ge=0)
    batch_size: int = Field(32, ge=1)
    learning_rate: float = Field(0.05, ge=0.0)
    weight_decay: float = Field(5e-4, ge=0.0)
    sgd_momentum: float = Field(0.9, ge=0.0, lt=1.0)
    seeds: list[int] = Field([0, 1, 2, 3, 4], min_length=1)
    width: int = Field(20, ge=1)
    norm_sites: Optional[int] = Field(None, ge=0, le=BLOCKS, description="Leading blocks using `norm`")
    gn_groups: int = Field(4, ge=1)
    warmup_epochs: int = Field(
        1, ge=0, description="Leading epochs in which PBN / pixel-BN layers run as BN to seed the accumulated statistics"
    )

    @model_validator(mode="after")
    def _check_batch_size(self) -> "TrainConfig":
        if self.uses_batch_statistics and self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2 for {self.norm}, got {self.batch_size}")
        return self

    @property
    def uses_batch_statistics(self) -> bool:
        """True when any block normalizes with batch statistics (BN fills blocks past norm_sites)"""
        sites = BLOCKS if self.norm_sites is None else self.norm_sites
        return self.norm in BATCH_STAT_KINDS or sites < BLOCKS

    @property
    def display_label(self) -> str:
        return self.label or self.norm


class SGD:
    """SGD with heavy-ball momentum and L2 weight decay"""

    def __init__(self, params: list[Tensor], lr: float, momentum: float = 0.0, weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.data) for p in params]

    def step(self):
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            g = p.grad + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.data -= self.lr * v


@dataclass
class TrainResult:
    model: TinyCNN
    seed: int
    losses: list[float] = field(default_factory=list)
    accuracies: list[float] = field(default_factory=list)


def build_model(cfg: TrainConfig, scheme: SchemeConfig, dataset: SyntheticDataset, seed: int) -> TinyCNN:
    return TinyCNN(
        norm_kind=cfg.norm,
        width=cfg.width,
        classes=dataset.classes,
        image_size=dataset.images.shape[-1],
        in_channels=dataset.images.shape[1],
        norm_sites=cfg.norm_sites,
        scheme=scheme,
        gn_groups=cfg.gn_groups,
        seed=seed,
        dtype=dataset.images.dtype,
    )


def train(
    cfg: TrainConfig,
    dataset: SyntheticDataset,
    scheme: Optional[SchemeConfig] = None,
    seed: Optional[int] = None,
) -> TrainResult:
    """
    Train one model with cross-entropy and SGD.

    Args:
        cfg: Training configuration
        dataset: Clean training domain
        scheme: Scheme configuration for PBN / pixel-BN layers
        seed: Run seed (first of cfg.seeds when omitted); drives init, shuffling and scheme draws

    Returns:
        TrainResult with the trained model and per-epoch loss / accuracy

    Raises:
        DivergenceError: The loss or the batch statistics became non-finite
    """
    scheme = scheme or SchemeConfig()
    seed = cfg.seeds[0] if seed is None else seed
    model = build_model(cfg, scheme, dataset, seed)
    model.train()
    optimizer = SGD(model.parameters(), cfg.learning_rate, cfg.sgd_momentum, cfg.weight_decay)
    shuffle_rng = np.random.default_rng([seed, len(dataset)])
    min_batch = 2 if cfg.uses_batch_statistics else 1

    result = TrainResult(model=model, seed=seed)
    logger.info(f"Training {cfg.display_label} (seed={seed}, epochs={cfg.epochs}, n={len(dataset)})")

    for epoch in range(cfg.epochs):
        total_loss = 0.0
        correct = 0
        seen = 0
        model.set_warmup(epoch < cfg.warmup_epochs)
        for images, labels in dataset.batches(cfg.batch_size, shuffle_rng):
            if len(labels) < min_batch:
                continue
            try:
                logits = model(Tensor(images))
            except DivergenceError as e:
                raise DivergenceError(f"{cfg.display_label} seed {seed}: {e} at epoch {epoch + 1}") from e
            loss = softmax_cross_entropy(logits, labels)
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(
                    f"{cfg.display_label} seed {seed}: non-finite loss at epoch {epoch + 1}"
                )

            model.zero_grad()
            loss.backward()
            optimizer.step()

            total_loss += value * len(labels)
            correct += int((logits.data[:, :, 0, 0].argmax(axis=1) == labels).sum())
            seen += len(labels)

        epoch_loss = total_loss / max(seen, 1)
        epoch_acc = correct / max(seen, 1)
        result.losses.append(epoch_loss)
        result.accuracies.append(epoch_acc)
        logger.info(f"  [{cfg.display_label} seed {seed}] epoch {epoch + 1}/{cfg.epochs} "
                    f"loss={epoch_loss:.4f} acc={epoch_acc:.3f}")

    model.set_warmup(False)
    model.eval()
    return result
