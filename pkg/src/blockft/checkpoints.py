"""Checkpoint archives for the segmentation network and the autoencoder.

One file holds the config echo, every tensor (parameters plus normalization
running statistics) under stable ``side.index.layer.name`` keys, and a
metadata record (seed, scheme, epochs, source checkpoint id).
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .errors import ShapeMismatchError, ValidationError
from .unet import (
    AutoencoderConfig,
    ConvAutoencoder,
    UNet,
    UNetConfig,
    build_autoencoder,
    build_unet,
)

FORMAT_VERSION = 1

KIND_UNET = "unet"
KIND_AUTOENCODER = "autoencoder"


def _to_archive_key(torch_name: str) -> str:
    parts = torch_name.split(".")
    if parts[0] == "enc":
        return f"encoder.{parts[1][1]}." + ".".join(parts[2:])
    if parts[0] == "dec":
        return f"decoder.{parts[1][1]}." + ".".join(parts[2:])
    if parts[0] == "head":
        return "decoder.1.head." + ".".join(parts[1:])
    return torch_name


def _from_archive_key(key: str) -> str:
    parts = key.split(".")
    if parts[0] == "encoder":
        return f"enc.e{parts[1]}." + ".".join(parts[2:])
    if parts[0] == "decoder":
        if parts[2] == "head":
            return "head." + ".".join(parts[3:])
        return f"dec.d{parts[1]}." + ".".join(parts[2:])
    return key


@dataclass
class Checkpoint:
    kind: str
    config: UNetConfig | AutoencoderConfig
    params: dict[str, torch.Tensor]
    meta: dict = field(default_factory=dict)
    checkpoint_id: str = ""

    def __post_init__(self):
        if not self.checkpoint_id:
            self.checkpoint_id = uuid.uuid4().hex[:12]


def snapshot(model: UNet | ConvAutoencoder, meta: dict | None = None) -> Checkpoint:
    """Capture the model's full state (parameters + running statistics)."""
    kind = KIND_UNET if isinstance(model, UNet) else KIND_AUTOENCODER
    params = {
        _to_archive_key(k) if kind == KIND_UNET else k: v.detach().clone()
        for k, v in model.state_dict().items()
    }
    return Checkpoint(kind, model.config, params, dict(meta or {}))


def restore_model(ckpt: Checkpoint) -> UNet | ConvAutoencoder:
    """Build a fresh model and load the checkpoint state into it."""
    if ckpt.kind == KIND_UNET:
        model: UNet | ConvAutoencoder = build_unet(ckpt.config, seed=0)
        state = {_from_archive_key(k): v for k, v in ckpt.params.items()}
    elif ckpt.kind == KIND_AUTOENCODER:
        model = build_autoencoder(ckpt.config, seed=0)
        state = dict(ckpt.params)
    else:
        raise ValidationError(f"unknown checkpoint kind {ckpt.kind!r}")
    try:
        model.load_state_dict(state)
    except RuntimeError as e:
        raise ShapeMismatchError(str(e)) from None
    return model


def load_into(ckpt: Checkpoint, model: UNet | ConvAutoencoder):
    """Load checkpoint state into an existing, config-compatible model."""
    if model.config != ckpt.config:
        raise ShapeMismatchError(
            f"checkpoint config {ckpt.config} incompatible with model config {model.config}"
        )
    if ckpt.kind == KIND_UNET:
        state = {_from_archive_key(k): v for k, v in ckpt.params.items()}
    else:
        state = dict(ckpt.params)
    model.load_state_dict(state)


def save_checkpoint(ckpt: Checkpoint, path) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {
        "format_version": FORMAT_VERSION,
        "kind": ckpt.kind,
        "config": ckpt.config.to_json_dict(),
        "params": ckpt.params,
        "meta": ckpt.meta,
        "checkpoint_id": ckpt.checkpoint_id,
    }
    torch.save(record, path)
    return ckpt.checkpoint_id


def load_checkpoint(path) -> Checkpoint:
    record = torch.load(path, map_location="cpu", weights_only=False)
    if record.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported checkpoint format in {path}")
    if record["kind"] == KIND_UNET:
        config: UNetConfig | AutoencoderConfig = UNetConfig.from_json_dict(record["config"])
    else:
        config = AutoencoderConfig.from_json_dict(record["config"])
    return Checkpoint(
        record["kind"], config, record["params"], record["meta"], record["checkpoint_id"]
    )
