"""On-disk dataset format.

One directory per dataset: ``descriptor.json`` plus per-frame pairs
``img_%05d.png`` (8-bit grayscale) / ``lbl_%05d.png`` (8-bit, values 0..4).
Frames are stored training split first, then test, in descriptor order; the
loader validates shapes, label range and class-subset closure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError
from .labels import DatasetDescriptor, FrameSample, validate_frames_against_subset

DESCRIPTOR_FILE = "descriptor.json"


@dataclass
class DatasetBundle:
    """A dataset held in memory: descriptor plus its train/test frames."""

    descriptor: DatasetDescriptor
    train: list[FrameSample]
    test: list[FrameSample]

    @property
    def name(self) -> str:
        return self.descriptor.name


def save_dataset(
    directory, descriptor: DatasetDescriptor, train: list[FrameSample], test: list[FrameSample]
) -> Path:
    if len(train) != descriptor.n_train or len(test) != descriptor.n_test:
        raise ValidationError(
            f"descriptor says {descriptor.n_train}/{descriptor.n_test} frames, "
            f"got {len(train)}/{len(test)}"
        )
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / DESCRIPTOR_FILE, "w") as f:
        json.dump(descriptor.to_json_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    for i, frame in enumerate(train + test):
        img8 = np.clip(np.round(frame.image * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(img8, mode="L").save(directory / f"img_{i:05d}.png")
        Image.fromarray(frame.labels.astype(np.uint8), mode="L").save(
            directory / f"lbl_{i:05d}.png"
        )
    return directory


def load_dataset(directory) -> DatasetBundle:
    directory = Path(directory)
    desc_path = directory / DESCRIPTOR_FILE
    if not desc_path.exists():
        raise ValidationError(f"{directory} is not a dataset directory (no {DESCRIPTOR_FILE})")
    with open(desc_path) as f:
        descriptor = DatasetDescriptor.from_json_dict(json.load(f))
    total = descriptor.n_train + descriptor.n_test
    frames = []
    for i in range(total):
        img_path = directory / f"img_{i:05d}.png"
        lbl_path = directory / f"lbl_{i:05d}.png"
        if not img_path.exists() or not lbl_path.exists():
            raise ValidationError(f"missing frame files for index {i} in {directory}")
        img = np.asarray(Image.open(img_path), dtype=np.float32) / 255.0
        lbl = np.asarray(Image.open(lbl_path), dtype=np.uint8)
        frames.append(FrameSample(img, lbl))
    validate_frames_against_subset(frames, descriptor.class_subset)
    return DatasetBundle(descriptor, frames[: descriptor.n_train], frames[descriptor.n_train :])


def load_dataset_root(root) -> dict[str, DatasetBundle]:
    """Load every dataset directory directly under ``root``, keyed by name."""
    root = Path(root)
    if not root.is_dir():
        raise ValidationError(f"{root} is not a directory")
    out: dict[str, DatasetBundle] = {}
    for child in sorted(root.iterdir()):
        if child.is_dir() and (child / DESCRIPTOR_FILE).exists():
            bundle = load_dataset(child)
            out[bundle.name] = bundle
    if not out:
        raise ValidationError(f"no dataset directories found under {root}")
    return out
