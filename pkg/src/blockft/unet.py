"""U-Net construction, block partitioning, trainability masks, weight transfer.

The network has 5 encoder blocks (the 5th is the bottleneck) and 4 decoder
blocks with skip connections E_i -> D_i for i in 1..4. Channel widths double
per encoder stage from ``base_channels``. Every parameter belongs to exactly
one block; the final 1x1 classification convolution belongs to D1, so
encoder-only schemes leave the output head frozen. Skip connections are
parameter-free concatenations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .errors import ConfigurationError, ShapeMismatchError
from .labels import LABEL_SPACE
from .norm import PolicyBatchNorm2d
from .schemes import ALL_BLOCKS, DECODER, ENCODER, BlockId, Scheme


@dataclass(frozen=True)
class UNetConfig:
    input_size: tuple[int, int] = (256, 256)
    base_channels: int = 8
    n_classes: int = LABEL_SPACE.n_classes

    def __post_init__(self):
        h, w = self.input_size
        if h % 16 != 0 or w % 16 != 0:
            raise ConfigurationError(f"input size {self.input_size} must be divisible by 16")
        if self.base_channels < 1:
            raise ConfigurationError("base_channels must be >= 1")
        if self.n_classes != LABEL_SPACE.n_classes:
            raise ConfigurationError("the output layer is fixed to the global 5-class space")

    def to_json_dict(self) -> dict:
        return {
            "input_size": list(self.input_size),
            "base_channels": self.base_channels,
            "n_classes": self.n_classes,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "UNetConfig":
        return cls(tuple(d["input_size"]), int(d["base_channels"]), int(d["n_classes"]))


class _ConvPair(nn.Module):
    """conv3x3 + norm + ReLU, twice."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.norm1 = PolicyBatchNorm2d(c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.norm2 = PolicyBatchNorm2d(c_out)

    def forward(self, x):
        x = F.relu(self.norm1(self.conv1(x)))
        return F.relu(self.norm2(self.conv2(x)))


class UNet(nn.Module):
    def __init__(self, config: UNetConfig):
        super().__init__()
        self.config = config
        c = [config.base_channels * 2**i for i in range(5)]
        self.enc = nn.ModuleDict(
            {
                "e1": _ConvPair(1, c[0]),
                "e2": _ConvPair(c[0], c[1]),
                "e3": _ConvPair(c[1], c[2]),
                "e4": _ConvPair(c[2], c[3]),
                "e5": _ConvPair(c[3], c[4]),  # bottleneck: no downsample after
            }
        )
        self.pool = nn.MaxPool2d(2)
        self.dec = nn.ModuleDict(
            {
                "d4": _ConvPair(c[4] + c[3], c[3]),
                "d3": _ConvPair(c[3] + c[2], c[2]),
                "d2": _ConvPair(c[2] + c[1], c[1]),
                "d1": _ConvPair(c[1] + c[0], c[0]),
            }
        )
        self.head = nn.Conv2d(c[0], config.n_classes, 1)

    @staticmethod
    def _up(x):
        return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(N, 1, H, W) -> (N, n_classes, H, W) per-pixel class probabilities."""
        e1 = self.enc["e1"](x)
        e2 = self.enc["e2"](self.pool(e1))
        e3 = self.enc["e3"](self.pool(e2))
        e4 = self.enc["e4"](self.pool(e3))
        e5 = self.enc["e5"](self.pool(e4))
        d4 = self.dec["d4"](torch.cat([self._up(e5), e4], dim=1))
        d3 = self.dec["d3"](torch.cat([self._up(d4), e3], dim=1))
        d2 = self.dec["d2"](torch.cat([self._up(d3), e2], dim=1))
        d1 = self.dec["d1"](torch.cat([self._up(d2), e1], dim=1))
        return torch.softmax(self.head(d1), dim=1)

    @torch.no_grad()
    def predict(self, images: np.ndarray) -> np.ndarray:
        """(N, H, W) images in [0,1] -> (N, H, W, n_classes) probabilities."""
        was_training = self.training
        self.eval()
        x = torch.from_numpy(np.asarray(images, dtype=np.float32)).unsqueeze(1)
        probs = self.forward(x).permute(0, 2, 3, 1).numpy()
        if was_training:
            self.train()
        return probs

    def set_stats_mode(self, mode: str):
        for m in self.modules():
            if isinstance(m, PolicyBatchNorm2d):
                m.set_stats_mode(mode)


def build_unet(config: UNetConfig, seed: int | None = None) -> UNet:
    """Construct a U-Net; a seed pins the weight initialization."""
    if seed is not None:
        torch.manual_seed(seed)
    return UNet(config)


def _block_of(param_name: str) -> BlockId:
    if param_name.startswith("enc."):
        return BlockId(ENCODER, int(param_name.split(".")[1][1]))
    if param_name.startswith("dec."):
        return BlockId(DECODER, int(param_name.split(".")[1][1]))
    if param_name.startswith("head."):
        return BlockId(DECODER, 1)  # output conv lives in D1
    raise AssertionError(f"parameter {param_name!r} is not assignable to a block")


def block_partition(model: UNet) -> dict[BlockId, list[tuple[str, nn.Parameter]]]:
    """Total, disjoint mapping of named parameters onto the 9 blocks."""
    partition: dict[BlockId, list[tuple[str, nn.Parameter]]] = {b: [] for b in ALL_BLOCKS}
    for name, p in model.named_parameters():
        partition[_block_of(name)].append((name, p))
    assert sum(len(v) for v in partition.values()) == sum(1 for _ in model.parameters())
    return partition


def apply_scheme(model: UNet, scheme: Scheme) -> dict[BlockId, bool]:
    """Set requires_grad so exactly the scheme's blocks are trainable.

    Returns the trainability mask by block.
    """
    trainable = set(scheme.trainable_blocks())
    mask = {b: b in trainable for b in ALL_BLOCKS}
    for name, p in model.named_parameters():
        p.requires_grad_(mask[_block_of(name)])
    return mask


def transfer_weights(source: UNet, target: UNet) -> UNet:
    """Copy all parameters and running statistics from source into target."""
    if source.config != target.config:
        raise ShapeMismatchError(
            f"config mismatch: source {source.config} vs target {target.config}"
        )
    with torch.no_grad():
        target.load_state_dict({k: v.clone() for k, v in source.state_dict().items()})
    return target


def conv_param_count(c_in: int, c_out: int, k: int = 3) -> int:
    return k * k * c_in * c_out + c_out


def expected_block_param_counts(config: UNetConfig) -> dict[BlockId, int]:
    """Closed-form parameter counts per block (convs + norm affine pairs)."""
    c = [config.base_channels * 2**i for i in range(5)]

    def pair(c_in, c_out):
        return conv_param_count(c_in, c_out) + conv_param_count(c_out, c_out) + 2 * (2 * c_out)

    counts = {
        BlockId(ENCODER, 1): pair(1, c[0]),
        BlockId(ENCODER, 2): pair(c[0], c[1]),
        BlockId(ENCODER, 3): pair(c[1], c[2]),
        BlockId(ENCODER, 4): pair(c[2], c[3]),
        BlockId(ENCODER, 5): pair(c[3], c[4]),
        BlockId(DECODER, 4): pair(c[4] + c[3], c[3]),
        BlockId(DECODER, 3): pair(c[3] + c[2], c[2]),
        BlockId(DECODER, 2): pair(c[2] + c[1], c[1]),
        BlockId(DECODER, 1): pair(c[1] + c[0], c[0]) + conv_param_count(c[0], config.n_classes, 1),
    }
    return counts


@dataclass
class AutoencoderConfig:
    """3 conv+max-pool encoder stages, 3 conv+upsample decoder stages."""

    input_size: tuple[int, int] = (64, 64)
    encoder_channels: tuple[int, int, int] = (16, 8, 8)
    decoder_channels: tuple[int, int, int] = (8, 8, 16)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        h, w = self.input_size
        if h % 8 != 0 or w % 8 != 0:
            raise ConfigurationError(f"input size {self.input_size} must be divisible by 8")
        if len(self.encoder_channels) != 3 or len(self.decoder_channels) != 3:
            raise ConfigurationError("exactly 3 encoder and 3 decoder stages")

    def to_json_dict(self) -> dict:
        return {
            "input_size": list(self.input_size),
            "encoder_channels": list(self.encoder_channels),
            "decoder_channels": list(self.decoder_channels),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "AutoencoderConfig":
        return cls(
            tuple(d["input_size"]),
            tuple(d["encoder_channels"]),
            tuple(d["decoder_channels"]),
        )


class ConvAutoencoder(nn.Module):
    """Reconstruction autoencoder; 3x3 kernels, ReLU, sigmoid single-channel output."""

    def __init__(self, config: AutoencoderConfig):
        super().__init__()
        self.config = config
        e1, e2, e3 = config.encoder_channels
        d1, d2, d3 = config.decoder_channels
        self.encoder = nn.Sequential(
            nn.Conv2d(1, e1, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(e1, e2, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(e2, e3, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
        )
        self.decoder = nn.Sequential(
            nn.Conv2d(e3, d1, 3, padding=1), nn.ReLU(), nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(d1, d2, 3, padding=1), nn.ReLU(), nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(d2, d3, 3, padding=1), nn.ReLU(), nn.Upsample(scale_factor=2, mode="nearest"),
        )
        self.out = nn.Conv2d(d3, 1, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(N, 1, H, W) -> (N, 1, H, W) reconstruction in [0, 1]."""
        return torch.sigmoid(self.out(self.decoder(self.encoder(x))))

    @torch.no_grad()
    def predict(self, images: np.ndarray) -> np.ndarray:
        x = torch.from_numpy(np.asarray(images, dtype=np.float32)).unsqueeze(1)
        return self.forward(x).squeeze(1).numpy()


def build_autoencoder(config: AutoencoderConfig, seed: int | None = None) -> ConvAutoencoder:
    if seed is not None:
        torch.manual_seed(seed)
    return ConvAutoencoder(config)
