"""Training loops: pre-training, scheme-constrained fine-tuning, autoencoder.

Defaults follow the reference protocol exactly: Adam, batch size 16,
learning rate 1e-4 for pre-training and 1e-6 for fine-tuning, per-pixel
cross-entropy over the 5 classes. Overrides are allowed but every effective
value is echoed into the run record. Runs are deterministic functions of
(seed, config, data).
"""

from __future__ import annotations

import json
import math
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .checkpoints import Checkpoint, restore_model, snapshot
from .errors import DivergedRunError, ValidationError
from .labels import FrameSample
from .schemes import Scheme
from .unet import AutoencoderConfig, UNet, apply_scheme, build_autoencoder

BN_POPULATION_STATS = "PopulationStats"
BN_FROZEN_STATS = "FrozenStats"
BN_POLICIES = (BN_POPULATION_STATS, BN_FROZEN_STATS)

DEFAULT_RESIZE = (256, 256)


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = 16
    lr_pretrain: float = 1e-4
    lr_finetune: float = 1e-6
    loss: str = "cross_entropy"
    epochs_pretrain: int = 40
    epochs_finetune: int = 20
    seed: int = 0
    bn_policy: str = BN_POPULATION_STATS

    def __post_init__(self):
        if self.optimizer != "adam":
            raise ValidationError("only the adam optimizer is supported")
        if self.loss != "cross_entropy":
            raise ValidationError("only cross_entropy loss is supported")
        if self.bn_policy not in BN_POLICIES:
            raise ValidationError(f"bn_policy must be one of {BN_POLICIES}")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")

    def overrides(self) -> dict:
        """Fields that differ from the reference defaults."""
        ref = TrainConfig()
        out = {}
        for name in self.__dataclass_fields__:
            if getattr(self, name) != getattr(ref, name):
                out[name] = getattr(self, name)
        return out

    def to_json_dict(self) -> dict:
        d = {name: getattr(self, name) for name in self.__dataclass_fields__}
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "adam_betas" in d:
            d["adam_betas"] = tuple(d["adam_betas"])
        return cls(**d)


@dataclass
class TrainRun:
    """Provenance record for one training run."""

    run_id: str
    kind: str  # pretrain | finetune | autoencoder
    dataset: str
    seed: int
    config: dict
    overrides: dict
    scheme: str | None = None
    source_checkpoint: str | None = None
    epoch_losses: list[float] = field(default_factory=list)
    final_loss: float | None = None
    checkpoint_path: str | None = None
    status: str = "ok"

    def to_json_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "kind": self.kind,
            "dataset": self.dataset,
            "seed": self.seed,
            "config": self.config,
            "overrides": self.overrides,
            "scheme": self.scheme,
            "source_checkpoint": self.source_checkpoint,
            "epoch_losses": self.epoch_losses,
            "final_loss": self.final_loss,
            "checkpoint_path": self.checkpoint_path,
            "status": self.status,
        }


def append_ledger(ledger_path, run: TrainRun):
    """Append one run record to the JSON-lines ledger."""
    path = Path(ledger_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as f:
        f.write(json.dumps(run.to_json_dict(), sort_keys=True) + "\n")


def _to_tensors(samples: list[FrameSample]) -> tuple[torch.Tensor, torch.Tensor]:
    images = torch.from_numpy(np.stack([s.image for s in samples])).unsqueeze(1)
    labels = torch.from_numpy(np.stack([s.labels for s in samples]).astype(np.int64))
    return images, labels


def _ce_loss(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    logp = torch.log(probs.clamp_min(1e-12))
    return torch.nn.functional.nll_loss(logp, labels)


def _run_epochs(model, images, target, loss_fn, optimizer, epochs, batch_size, rng) -> list[float]:
    n = images.shape[0]
    epoch_losses = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total, count = 0.0, 0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            batch = images[idx]
            tgt = target[idx]
            optimizer.zero_grad()
            loss = loss_fn(model(batch), tgt)
            if not math.isfinite(loss.item()):
                raise DivergedRunError(f"non-finite loss at epoch {epoch}", epoch=epoch)
            loss.backward()
            optimizer.step()
            total += loss.item() * len(idx)
            count += len(idx)
        epoch_losses.append(total / count)
    return epoch_losses


def pretrain(
    model: UNet, train_samples: list[FrameSample], config: TrainConfig, dataset_name: str = ""
) -> tuple[Checkpoint, TrainRun]:
    """Train all parameters from scratch with batch-statistics normalization."""
    if not train_samples:
        raise ValidationError("pre-training set is empty")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model.train()
    model.set_stats_mode("batch")
    for p in model.parameters():
        p.requires_grad_(True)
    images, labels = _to_tensors(train_samples)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr_pretrain, betas=config.adam_betas)
    losses = _run_epochs(
        model, images, labels, _ce_loss, optimizer, config.epochs_pretrain, config.batch_size, rng
    )
    run = TrainRun(
        run_id=uuid.uuid4().hex[:12],
        kind="pretrain",
        dataset=dataset_name,
        seed=config.seed,
        config=config.to_json_dict(),
        overrides=config.overrides(),
        epoch_losses=losses,
        final_loss=losses[-1] if losses else None,
    )
    ckpt = snapshot(
        model,
        meta={"seed": config.seed, "scheme": None, "epochs": config.epochs_pretrain,
              "source_checkpoint": None, "dataset": dataset_name, "run_id": run.run_id},
    )
    return ckpt, run


def finetune(
    checkpoint: Checkpoint,
    scheme: Scheme,
    train_samples: list[FrameSample],
    config: TrainConfig,
    dataset_name: str = "",
) -> tuple[Checkpoint, TrainRun]:
    """Fine-tune the scheme's trainable blocks from a transferred checkpoint.

    Parameters outside the trainable set are left bit-identical. The
    normalization layers follow ``config.bn_policy``: population statistics
    are used for normalization either way; they continue updating from
    fine-tuning batches only under PopulationStats.
    """
    if not train_samples:
        raise ValidationError("fine-tuning set is empty")
    model = restore_model(checkpoint)
    assert isinstance(model, UNet), "fine-tuning applies to segmentation checkpoints"
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model.train()
    model.set_stats_mode("population" if config.bn_policy == BN_POPULATION_STATS else "frozen")
    apply_scheme(model, scheme)
    trainable = [p for p in model.parameters() if p.requires_grad]
    if not trainable:
        raise ValidationError(f"scheme {scheme} has no trainable parameters")
    images, labels = _to_tensors(train_samples)
    optimizer = torch.optim.Adam(trainable, lr=config.lr_finetune, betas=config.adam_betas)
    losses = _run_epochs(
        model, images, labels, _ce_loss, optimizer, config.epochs_finetune, config.batch_size, rng
    )
    run = TrainRun(
        run_id=uuid.uuid4().hex[:12],
        kind="finetune",
        dataset=dataset_name,
        seed=config.seed,
        config=config.to_json_dict(),
        overrides=config.overrides(),
        scheme=str(scheme),
        source_checkpoint=checkpoint.checkpoint_id,
        epoch_losses=losses,
        final_loss=losses[-1] if losses else None,
    )
    ckpt = snapshot(
        model,
        meta={"seed": config.seed, "scheme": str(scheme), "epochs": config.epochs_finetune,
              "source_checkpoint": checkpoint.checkpoint_id, "dataset": dataset_name,
              "run_id": run.run_id, "bn_policy": config.bn_policy},
    )
    return ckpt, run


AE_LOSSES = ("mse", "binary_cross_entropy")


@dataclass(frozen=True)
class AutoencoderTrainConfig:
    epochs: int = 5
    batch_size: int = 16
    lr: float = 1e-3
    loss: str = "mse"
    seed: int = 0

    def __post_init__(self):
        if self.loss not in AE_LOSSES:
            raise ValidationError(f"autoencoder loss must be one of {AE_LOSSES}")

    def to_json_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


def _bce_loss(recon: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return torch.nn.functional.binary_cross_entropy(recon.clamp(1e-7, 1 - 1e-7), target)


def _mse_loss(recon: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return torch.nn.functional.mse_loss(recon, target)


def train_autoencoder(
    train_samples: list[FrameSample],
    ae_config: AutoencoderConfig,
    config: AutoencoderTrainConfig = AutoencoderTrainConfig(),
    dataset_name: str = "",
) -> tuple[Checkpoint, float, TrainRun]:
    """Train the reconstruction autoencoder and report its difficulty score.

    The score is the mean per-pixel reconstruction loss over the final
    training epoch; higher means statistically harder data. Only orderings of
    this score are meaningful, not its absolute scale. The default quadratic
    loss is used because per-pixel cross-entropy is linear in a gray-valued
    target, which makes it insensitive to unpredictable speckle; it remains
    available as an ablation via ``loss="binary_cross_entropy"``.
    """
    if not train_samples:
        raise ValidationError("autoencoder training set is empty")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model = build_autoencoder(ae_config)
    model.train()
    images = torch.from_numpy(np.stack([s.image for s in train_samples])).unsqueeze(1)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    loss_fn = _mse_loss if config.loss == "mse" else _bce_loss
    losses = _run_epochs(
        model, images, images, loss_fn, optimizer, config.epochs, config.batch_size, rng
    )
    final = losses[-1]
    run = TrainRun(
        run_id=uuid.uuid4().hex[:12],
        kind="autoencoder",
        dataset=dataset_name,
        seed=config.seed,
        config=config.to_json_dict(),
        overrides={},
        epoch_losses=losses,
        final_loss=final,
    )
    ckpt = snapshot(
        model,
        meta={"seed": config.seed, "scheme": None, "epochs": config.epochs,
              "source_checkpoint": None, "dataset": dataset_name, "run_id": run.run_id},
    )
    return ckpt, final, run


def with_seed(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=seed)
