"""
Tiny CNN for the domain-shift harness.
Three blocks of conv3x3 -> norm -> relu -> maxpool2x2, then a dense softmax head.
"""
import logging
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .storage import Checkpoint
from ..config import get_settings
from ..errors import LoadError
from ..norm import BaseNorm, NormFactory, NormState, PatchBatchNorm, NORM_KINDS
from ..scheme import SchemeConfig
from ..tensor import Tensor, conv3x3, dense, flatten, maxpool2x2, relu

logger = logging.getLogger(__name__)

BLOCKS = 3


@dataclass
class ConvBlock:
    weight: Tensor
    bias: Tensor
    norm: BaseNorm


class TinyCNN:
    """Small classifier whose normalization sites can be swapped per norm kind"""

    def __init__(
        self,
        norm_kind: str = "bn",
        width: int = 16,
        classes: int = 8,
        image_size: int = 16,
        in_channels: int = 3,
        norm_sites: Optional[int] = None,
        scheme: Optional[SchemeConfig] = None,
        gn_groups: int = 4,
        seed: int = 0,
        dtype: Optional[np.dtype] = None,
    ):
        """
        Args:
            norm_kind: Norm layer for the first norm_sites blocks
            width: Channels of the first block (then 2x and 4x)
            classes: Output classes
            image_size: Input height and width
            in_channels: Input channels
            norm_sites: How many leading blocks use norm_kind (all by default); the rest use BN
            scheme: Scheme configuration for PBN / pixel-BN layers
            gn_groups: GroupNorm group count
            seed: Weight-initialization seed
            dtype: Parameter dtype
        """
        self.norm_kind = norm_kind
        self.width = width
        self.classes = classes
        self.image_size = image_size
        self.in_channels = in_channels
        self.norm_sites = BLOCKS if norm_sites is None else norm_sites
        self.scheme = scheme or SchemeConfig()
        self.gn_groups = gn_groups
        self.seed = seed
        dtype = dtype or get_settings().dtype

        factory = NormFactory(self.scheme, gn_groups=gn_groups, run_seed=seed)
        rng = np.random.default_rng(seed)
        widths = [width * 2 ** i for i in range(BLOCKS)]

        self.blocks: list[ConvBlock] = []
        channels_in = in_channels
        for i, channels_out in enumerate(widths):
            fan_in = channels_in * 9
            weight = Tensor(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(channels_out, channels_in, 3, 3)),
                            requires_grad=True, dtype=dtype)
            bias = Tensor(np.zeros((1, channels_out, 1, 1)), requires_grad=True, dtype=dtype)
            kind = norm_kind if i < self.norm_sites else "bn"
            norm = factory.create(kind, channels_out, dtype=dtype)
            self.blocks.append(ConvBlock(weight, bias, norm))
            channels_in = channels_out

        spatial = image_size // 2 ** BLOCKS
        features = widths[-1] * spatial * spatial
        self.head_weight = Tensor(rng.normal(0.0, np.sqrt(1.0 / features), size=(classes, features, 1, 1)),
                                  requires_grad=True, dtype=dtype)
        self.head_bias = Tensor(np.zeros((1, classes, 1, 1)), requires_grad=True, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        """Class logits of shape (N, classes, 1, 1)"""
        for block in self.blocks:
            x = conv3x3(x, block.weight, block.bias)
            x = block.norm(x)
            x = relu(x)
            x = maxpool2x2(x)
        return dense(flatten(x), self.head_weight, self.head_bias)

    __call__ = forward

    def first_conv_features(self, x: Tensor) -> Tensor:
        """Output of the first convolution, before any normalization"""
        block = self.blocks[0]
        return conv3x3(x, block.weight, block.bias)

    def predict(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Argmax class ids for a stack of images (mode is left as is)"""
        dtype = self.head_weight.dtype
        predictions = []
        for start in range(0, len(images), batch_size):
            logits = self.forward(Tensor(images[start:start + batch_size], dtype=dtype))
            predictions.append(logits.data[:, :, 0, 0].argmax(axis=1))
        return np.concatenate(predictions) if predictions else np.empty(0, dtype=np.int64)

    def norm_layers(self) -> list[BaseNorm]:
        return [block.norm for block in self.blocks]

    def named_parameters(self) -> dict[str, Tensor]:
        params = {}
        for i, block in enumerate(self.blocks):
            params[f"block{i}.conv.weight"] = block.weight
            params[f"block{i}.conv.bias"] = block.bias
            params[f"block{i}.norm.gamma"] = block.norm.state.gamma
            params[f"block{i}.norm.beta"] = block.norm.state.beta
        params["head.weight"] = self.head_weight
        params["head.bias"] = self.head_bias
        return params

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def train(self):
        for layer in self.norm_layers():
            layer.train()

    def eval(self):
        for layer in self.norm_layers():
            layer.eval()

    def set_warmup(self, active: bool):
        """Run patch-aware layers as plain BN while active"""
        for layer in self.norm_layers():
            if isinstance(layer, PatchBatchNorm):
                layer.warmup = active

    def metadata(self) -> dict[str, Any]:
        return {
            "model": "tiny_cnn",
            "norm": self.norm_kind,
            "width": self.width,
            "classes": self.classes,
            "image_size": self.image_size,
            "in_channels": self.in_channels,
            "norm_sites": self.norm_sites,
            "gn_groups": self.gn_groups,
            "seed": self.seed,
            "scheme": self.scheme.model_dump(),
        }

    def state_dict(self) -> dict[str, np.ndarray]:
        """Flat record of every parameter and normalization state"""
        record: dict[str, np.ndarray] = {}
        for i, block in enumerate(self.blocks):
            record[f"block{i}.conv.weight"] = block.weight.data.astype(np.float64)
            record[f"block{i}.conv.bias"] = block.bias.data.astype(np.float64)
            record.update(block.norm.state.to_record(prefix=f"block{i}.norm."))
        record["head.weight"] = self.head_weight.data.astype(np.float64)
        record["head.bias"] = self.head_bias.data.astype(np.float64)
        return record

    def load_state_dict(self, record: dict[str, np.ndarray]):
        """
        Copy arrays from a flat record into this model.

        Raises:
            LoadError: A key is missing or an array has the wrong shape
        """
        def take(key: str, target: Tensor):
            if key not in record:
                raise LoadError(f"Checkpoint is missing '{key}'")
            value = np.asarray(record[key])
            if value.size != target.size:
                raise LoadError(f"'{key}' has {value.size} values, model expects shape {target.shape}")
            target.data[...] = value.reshape(target.shape)

        for i, block in enumerate(self.blocks):
            take(f"block{i}.conv.weight", block.weight)
            take(f"block{i}.conv.bias", block.bias)
            mode = block.norm.state.mode
            state = NormState.from_record(record, prefix=f"block{i}.norm.", dtype=block.weight.dtype)
            if state.channels != block.norm.state.channels:
                raise LoadError(f"block{i} norm has {state.channels} channels, model expects {block.norm.state.channels}")
            state.mode = mode
            block.norm.state = state
        take("head.weight", self.head_weight)
        take("head.bias", self.head_bias)

    def to_checkpoint(self, **extra_meta: Any) -> Checkpoint:
        return Checkpoint(meta={**self.metadata(), **extra_meta}, arrays=self.state_dict())

    @classmethod
    def from_checkpoint(
        cls, checkpoint: Checkpoint, norm_kind: Optional[str] = None, scheme: Optional[SchemeConfig] = None,
        dtype: Optional[np.dtype] = None,
    ) -> "TinyCNN":
        """
        Rebuild a model from a checkpoint, optionally under another norm label.

        Args:
            checkpoint: Loaded checkpoint
            norm_kind: Norm label to build with (the checkpoint's own when omitted)
            scheme: Scheme configuration (the checkpoint's own when omitted)
            dtype: Parameter dtype

        Returns:
            Model in eval mode
        """
        meta = checkpoint.meta
        if meta.get("model") != "tiny_cnn":
            raise LoadError(f"Checkpoint is not a tiny_cnn checkpoint (model={meta.get('model')!r})")
        norm_kind = norm_kind or meta["norm"]
        if norm_kind not in NORM_KINDS:
            raise LoadError(f"Unknown norm kind '{norm_kind}'")
        try:
            scheme = scheme or SchemeConfig(**meta.get("scheme", {}))
            model = cls(
                norm_kind=norm_kind,
                width=int(meta["width"]),
                classes=int(meta["classes"]),
                image_size=int(meta["image_size"]),
                in_channels=int(meta["in_channels"]),
                norm_sites=int(meta["norm_sites"]),
                scheme=scheme,
                gn_groups=int(meta["gn_groups"]),
                seed=int(meta["seed"]),
                dtype=dtype,
            )
        except (KeyError, ValueError) as e:
            raise LoadError(f"Checkpoint metadata is incomplete: {e}") from e
        model.load_state_dict(checkpoint.arrays)
        model.eval()
        return model
