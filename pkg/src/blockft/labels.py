"""Global label space and core frame/dataset record types.

A single 5-class label space is shared by every dataset so that weights,
including the output layer, transfer between datasets without reshaping.
Datasets covering fewer structures simply never emit the missing indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ValidationError

CLASS_NAMES = ("background", "artery", "vein", "ligament", "nerve")

BACKGROUND = 0
ARTERY = 1
VEIN = 2
LIGAMENT = 3
NERVE = 4


@dataclass(frozen=True)
class LabelSpace:
    """Ordered class names with background fixed at index 0."""

    classes: tuple[str, ...] = CLASS_NAMES

    def __post_init__(self):
        if len(self.classes) != 5:
            raise ValidationError(f"label space must have exactly 5 classes, got {len(self.classes)}")
        if self.classes[0] != "background":
            raise ValidationError("class 0 must be 'background'")
        if len(set(self.classes)) != len(self.classes):
            raise ValidationError("class names must be unique")

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def index(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise ValidationError(f"unknown class name {name!r}") from None

    def names(self, indices: Iterable[int]) -> tuple[str, ...]:
        return tuple(self.classes[i] for i in indices)


LABEL_SPACE = LabelSpace()


@dataclass
class FrameSample:
    """One grayscale image plus an integer label map over the global classes.

    image: float array, shape (H, W), values in [0, 1].
    labels: integer array, same shape, values in 0..4.
    """

    image: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float32)
        self.labels = np.asarray(self.labels)
        if self.image.ndim != 2 or self.labels.ndim != 2:
            raise ValidationError("image and labels must be 2-D")
        if self.image.shape != self.labels.shape:
            raise ValidationError(
                f"image shape {self.image.shape} != labels shape {self.labels.shape}"
            )
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise ValidationError("labels must be integer-valued")
        if self.labels.min(initial=0) < 0 or self.labels.max(initial=0) >= LABEL_SPACE.n_classes:
            raise ValidationError("labels outside the 0..4 label space")
        lo, hi = float(self.image.min()), float(self.image.max())
        if lo < -1e-6 or hi > 1 + 1e-6:
            raise ValidationError(f"image intensities must lie in [0, 1], got [{lo}, {hi}]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape  # type: ignore[return-value]

    def copy(self) -> "FrameSample":
        return FrameSample(self.image.copy(), self.labels.copy())


@dataclass
class DatasetDescriptor:
    """Named dataset plus the acquisition metadata used as generator proxies."""

    name: str
    scanner_freq_mhz: float
    gain_db: tuple[float, float]
    class_subset: tuple[str, ...]
    n_train: int
    n_test: int
    role_tag: str = "synthetic-custom"
    extra: dict = field(default_factory=dict)

    ROLE_TAGS = ("h50", "ph1-12", "ph1-22", "ph2-12", "p12", "synthetic-custom")

    def __post_init__(self):
        self.class_subset = tuple(self.class_subset)
        self.gain_db = tuple(float(g) for g in self.gain_db)  # type: ignore[assignment]
        if "background" not in self.class_subset:
            raise ValidationError("class_subset must contain 'background'")
        for c in self.class_subset:
            LABEL_SPACE.index(c)
        if self.n_train < 0 or self.n_test < 0 or self.n_train + self.n_test < 1:
            raise ValidationError("need n_train >= 0, n_test >= 0 and at least one frame")
        if self.role_tag not in self.ROLE_TAGS:
            raise ValidationError(f"unknown role_tag {self.role_tag!r}")

    def subset_indices(self) -> tuple[int, ...]:
        return tuple(sorted(LABEL_SPACE.index(c) for c in self.class_subset))

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "scanner_freq_mhz": self.scanner_freq_mhz,
            "gain_db": list(self.gain_db),
            "class_subset": list(self.class_subset),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "role_tag": self.role_tag,
            "extra": self.extra,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DatasetDescriptor":
        return cls(
            name=d["name"],
            scanner_freq_mhz=float(d["scanner_freq_mhz"]),
            gain_db=tuple(d["gain_db"]),
            class_subset=tuple(d["class_subset"]),
            n_train=int(d["n_train"]),
            n_test=int(d["n_test"]),
            role_tag=d.get("role_tag", "synthetic-custom"),
            extra=d.get("extra", {}),
        )


def validate_frames_against_subset(frames: Iterable[FrameSample], subset: tuple[str, ...]):
    """Check that all label values belong to the declared class subset."""
    allowed = {LABEL_SPACE.index(c) for c in subset}
    for i, f in enumerate(frames):
        present = set(np.unique(f.labels).tolist())
        if not present <= allowed:
            raise ValidationError(
                f"frame {i} uses labels {sorted(present - allowed)} outside subset {sorted(allowed)}"
            )
