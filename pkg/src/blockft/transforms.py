"""Spatial augmentation, resizing and splitting of frame samples.

Images and label maps always undergo the identical spatial transform; images
are interpolated bilinearly, labels resampled nearest-neighbor so they stay
integer-valued. Blur applies to images only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ValidationError
from .labels import FrameSample


@dataclass(frozen=True)
class AugmentationSpec:
    flip: bool = True
    rotate_max_deg: float = 10.0
    blur_sigma_range: tuple[float, float] = (0.0, 1.0)
    translate_max_frac: float = 0.05
    target_multiplier: int = 20

    def __post_init__(self):
        lo, hi = self.blur_sigma_range
        if lo < 0 or hi < lo:
            raise ValidationError("blur_sigma_range must satisfy 0 <= lo <= hi")
        if self.rotate_max_deg < 0 or self.translate_max_frac < 0:
            raise ValidationError("rotation and translation bounds must be >= 0")
        if self.target_multiplier < 1:
            raise ValidationError("target_multiplier must be >= 1")

    @property
    def is_identity(self) -> bool:
        return (
            not self.flip
            and self.rotate_max_deg == 0
            and self.blur_sigma_range == (0.0, 0.0)
            and self.translate_max_frac == 0
        )


def flip_horizontal(frame: FrameSample) -> FrameSample:
    return FrameSample(frame.image[:, ::-1].copy(), frame.labels[:, ::-1].copy())


def rotate_frame(frame: FrameSample, degrees: float) -> FrameSample:
    if degrees == 0:
        return frame.copy()
    img = ndimage.rotate(frame.image, degrees, reshape=False, order=1, mode="nearest")
    lbl = ndimage.rotate(frame.labels, degrees, reshape=False, order=0, mode="nearest")
    return FrameSample(np.clip(img, 0.0, 1.0), lbl.astype(frame.labels.dtype))


def translate_frame(frame: FrameSample, dy: float, dx: float) -> FrameSample:
    if dy == 0 and dx == 0:
        return frame.copy()
    img = ndimage.shift(frame.image, (dy, dx), order=1, mode="nearest")
    lbl = ndimage.shift(frame.labels, (dy, dx), order=0, mode="nearest")
    return FrameSample(np.clip(img, 0.0, 1.0), lbl.astype(frame.labels.dtype))


def blur_frame(frame: FrameSample, sigma: float) -> FrameSample:
    if sigma <= 0:
        return frame.copy()
    return FrameSample(
        np.clip(ndimage.gaussian_filter(frame.image, sigma), 0.0, 1.0), frame.labels.copy()
    )


def augment_dataset(
    samples: list[FrameSample], spec: AugmentationSpec, seed: int
) -> list[FrameSample]:
    """Expand the training set to len(samples) * target_multiplier frames.

    Each output derives from one input by a sampled flip/rotate/translate
    chain followed by an image-only blur. An all-disabled spec reproduces the
    inputs exactly.
    """
    if not samples:
        raise ValidationError("augmentation input is empty")
    rng = np.random.default_rng(seed)
    out: list[FrameSample] = []
    for _ in range(spec.target_multiplier):
        for frame in samples:
            if spec.is_identity:
                out.append(frame.copy())
                continue
            f = frame
            if spec.flip and rng.uniform() < 0.5:
                f = flip_horizontal(f)
            if spec.rotate_max_deg > 0:
                f = rotate_frame(f, rng.uniform(-spec.rotate_max_deg, spec.rotate_max_deg))
            if spec.translate_max_frac > 0:
                h, w = f.shape
                f = translate_frame(
                    f,
                    rng.uniform(-spec.translate_max_frac, spec.translate_max_frac) * h,
                    rng.uniform(-spec.translate_max_frac, spec.translate_max_frac) * w,
                )
            lo, hi = spec.blur_sigma_range
            if hi > 0:
                f = blur_frame(f, rng.uniform(lo, hi))
            out.append(f if f is not frame else frame.copy())
    return out


def resize_frame(frame: FrameSample, target: tuple[int, int]) -> FrameSample:
    """Resize to (H, W): bilinear for the image, nearest-neighbor for labels.

    Nearest-neighbor picks the source pixel floor(coord + 0.5) under the
    pixel-center coordinate convention, clamped to the grid.
    """
    th, tw = target
    if th < 8 or tw < 8:
        raise ValidationError(f"degenerate resize target {target}")
    h, w = frame.shape
    if (th, tw) == (h, w):
        return frame.copy()
    yy = (np.arange(th) + 0.5) * (h / th) - 0.5
    xx = (np.arange(tw) + 0.5) * (w / tw) - 0.5
    grid = np.meshgrid(yy, xx, indexing="ij")
    img = ndimage.map_coordinates(frame.image, grid, order=1, mode="nearest")
    src_y = np.clip(np.floor(yy + 0.5).astype(int), 0, h - 1)
    src_x = np.clip(np.floor(xx + 0.5).astype(int), 0, w - 1)
    lbl = frame.labels[np.ix_(src_y, src_x)]
    return FrameSample(np.clip(img, 0.0, 1.0), lbl.astype(frame.labels.dtype))


def split_dataset(
    samples: list[FrameSample], n_train: int, n_test: int, seed: int
) -> tuple[list[FrameSample], list[FrameSample]]:
    """Disjoint seeded train/test partition of the requested sizes."""
    if n_train < 0 or n_test < 0 or n_train + n_test > len(samples):
        raise ValidationError(
            f"cannot split {len(samples)} samples into {n_train} train + {n_test} test"
        )
    order = np.random.default_rng(seed).permutation(len(samples))
    train = [samples[i] for i in order[:n_train]]
    test = [samples[i] for i in order[n_train : n_train + n_test]]
    return train, test
