"""Synthetic ultrasound-like phantom frames.

These are statistical stand-ins, not physical simulation. Vessels are dark
(hypoechoic) elliptical regions, ligaments bright bands, nerves speckled
bundles; multiplicative speckle with a controllable grain size plays the role
of transducer frequency, ``noise_level`` the role of image difficulty,
``gain_offset`` brightness/contrast, and ``artifact_prob`` injects acoustic
shadows and unlabeled structures. Generation is a pure function of the spec
(including its seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .datastore import DatasetBundle
from .errors import ValidationError
from .labels import (
    ARTERY,
    CLASS_NAMES,
    LABEL_SPACE,
    LIGAMENT,
    NERVE,
    VEIN,
    DatasetDescriptor,
    FrameSample,
)

VESSEL_CLASSES = (ARTERY, VEIN)


@dataclass(frozen=True)
class PhantomSpec:
    name: str = "synthetic"
    image_size: tuple[int, int] = (64, 64)
    class_subset: tuple[str, ...] = CLASS_NAMES
    n_frames: int = 16
    n_vessels: tuple[int, int] = (1, 2)
    speckle_scale: float = 3.0
    noise_level: float = 0.3
    gain_offset: float = 0.0
    artifact_prob: float = 0.0
    seed: int = 0
    scanner_freq_mhz: float = 12.0
    gain_db: tuple[float, float] = (50.0, 60.0)
    role_tag: str = "synthetic-custom"

    def __post_init__(self):
        h, w = self.image_size
        if h < 16 or w < 16:
            raise ValidationError("image size must be at least 16x16")
        if not self.class_subset or "background" not in self.class_subset:
            raise ValidationError("class_subset must be non-empty and contain 'background'")
        for c in self.class_subset:
            LABEL_SPACE.index(c)
        if self.noise_level <= 0:
            raise ValidationError("noise_level must be > 0")
        if not 0.0 <= self.artifact_prob <= 1.0:
            raise ValidationError("artifact_prob must lie in [0, 1]")
        if self.speckle_scale <= 0:
            raise ValidationError("speckle_scale must be > 0")
        if self.n_frames < 1:
            raise ValidationError("n_frames must be >= 1")
        lo, hi = self.n_vessels
        if lo < 1 or hi < lo:
            raise ValidationError("n_vessels must be a (lo, hi) range with lo >= 1")


def _smooth_field(rng: np.random.Generator, shape: tuple[int, int], grain: float) -> np.ndarray:
    """Zero-mean, unit-std random field with spatial correlation ~grain pixels."""
    h, w = shape
    lh = max(2, int(math.ceil(h / max(grain, 1.0))))
    lw = max(2, int(math.ceil(w / max(grain, 1.0))))
    low = rng.standard_normal((lh, lw))
    yy = np.linspace(0, lh - 1, h)
    xx = np.linspace(0, lw - 1, w)
    grid = np.meshgrid(yy, xx, indexing="ij")
    up = ndimage.map_coordinates(low, grid, order=1, mode="nearest")
    std = up.std()
    return (up - up.mean()) / (std if std > 1e-9 else 1.0)


def _ellipse_mask(shape, cy, cx, ry, rx, angle) -> np.ndarray:
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    y = yy - cy
    x = xx - cx
    ca, sa = math.cos(angle), math.sin(angle)
    u = ca * x + sa * y
    v = -sa * x + ca * y
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def _place(rng, shape, labels, ry, rx, tries: int = 8):
    """Pick a center whose ellipse overlaps existing structures as little as
    possible; overlap is tolerated after the retry budget."""
    h, w = shape
    best = None
    for _ in range(tries):
        cy = rng.uniform(0.18 * h, 0.82 * h)
        cx = rng.uniform(0.18 * w, 0.82 * w)
        angle = rng.uniform(0, math.pi)
        mask = _ellipse_mask(shape, cy, cx, ry, rx, angle)
        overlap = (labels[mask] > 0).mean() if mask.any() else 1.0
        if best is None or overlap < best[0]:
            best = (overlap, mask)
        if overlap <= 0.05:
            break
    return best[1]


def _draw_frame(rng: np.random.Generator, spec: PhantomSpec) -> FrameSample:
    h, w = spec.image_size
    shape = (h, w)
    subset = {LABEL_SPACE.index(c) for c in spec.class_subset}

    tissue = 0.34 + 0.05 * _smooth_field(rng, shape, grain=max(h, w) / 4)
    labels = np.zeros(shape, dtype=np.uint8)

    scale = min(h, w)
    if LIGAMENT in subset:
        for _ in range(int(rng.integers(1, 3))):
            ry = rng.uniform(0.02, 0.045) * scale
            rx = rng.uniform(0.28, 0.42) * scale
            mask = _place(rng, shape, labels, ry, rx)
            tissue[mask] = rng.uniform(0.78, 0.9)
            labels[mask] = LIGAMENT
    if NERVE in subset:
        for _ in range(int(rng.integers(1, 3))):
            r = rng.uniform(0.05, 0.09) * scale
            mask = _place(rng, shape, labels, r, r * rng.uniform(1.0, 1.5))
            # honeycomb interior: speckled mid-bright bundle
            texture = 0.5 + 0.22 * _smooth_field(rng, shape, grain=2.0)
            tissue[mask] = np.clip(texture[mask], 0.3, 0.75)
            labels[mask] = NERVE
    for cls in VESSEL_CLASSES:
        if cls not in subset:
            continue
        count = int(rng.integers(spec.n_vessels[0], spec.n_vessels[1] + 1))
        for _ in range(count):
            r = rng.uniform(0.055, 0.1) * scale
            if cls == ARTERY:
                ry, rx = r, r * rng.uniform(0.95, 1.1)  # arteries stay round
                level = rng.uniform(0.04, 0.09)
            else:
                ry, rx = r * rng.uniform(0.45, 0.65), r * rng.uniform(1.4, 1.9)  # compressed
                level = rng.uniform(0.1, 0.16)
            mask = _place(rng, shape, labels, ry, rx)
            tissue[mask] = level
            labels[mask] = cls

    speckle = _smooth_field(rng, shape, grain=spec.speckle_scale)
    img = tissue * (1.0 + spec.noise_level * np.clip(speckle, -2.5, 2.5))

    if spec.artifact_prob > 0 and rng.uniform() < spec.artifact_prob:
        # unlabeled structure plus an acoustic shadow below it
        cy = rng.uniform(0.2 * h, 0.5 * h)
        cx = rng.uniform(0.2 * w, 0.8 * w)
        r = rng.uniform(0.06, 0.12) * scale
        blob = _ellipse_mask(shape, cy, cx, r, r * rng.uniform(1.0, 1.6), rng.uniform(0, math.pi))
        img[blob] = np.clip(img[blob] + rng.uniform(0.25, 0.4), 0, 1)
        yy, xx = np.mgrid[0:h, 0:w]
        half_width = r * rng.uniform(0.8, 1.2)
        shadow = (yy > cy + r * 0.5) & (np.abs(xx - cx) < half_width)
        img[shadow] *= rng.uniform(0.3, 0.5)

    img = img * (1.0 + spec.gain_offset)
    return FrameSample(np.clip(img, 0.0, 1.0).astype(np.float32), labels)


def generate_phantom_dataset(spec: PhantomSpec) -> tuple[DatasetDescriptor, list[FrameSample]]:
    """Deterministically synthesize ``spec.n_frames`` frames.

    Every frame contains at least one instance of each non-background class
    in the subset, so dataset-level class coverage holds by construction.
    """
    rng = np.random.default_rng(spec.seed)
    frames = [_draw_frame(rng, spec) for _ in range(spec.n_frames)]
    descriptor = DatasetDescriptor(
        name=spec.name,
        scanner_freq_mhz=spec.scanner_freq_mhz,
        gain_db=spec.gain_db,
        class_subset=tuple(spec.class_subset),
        n_train=spec.n_frames,
        n_test=0,
        role_tag=spec.role_tag,
        extra={"seed": spec.seed, "noise_level": spec.noise_level,
               "speckle_scale": spec.speckle_scale, "artifact_prob": spec.artifact_prob},
    )
    return descriptor, frames


# Registry presets: one generator parameterization per scanner/dataset role.
# Frequency maps inversely onto speckle grain, and the noisiest roles mirror
# the highest-frequency scanners.
ROLE_PRESETS: dict[str, dict] = {
    "h50": dict(class_subset=("background", "artery"), scanner_freq_mhz=50.0,
                gain_db=(40.0, 70.0), speckle_scale=1.5, noise_level=0.45, n_vessels=(1, 2)),
    "ph1-12": dict(class_subset=CLASS_NAMES, scanner_freq_mhz=12.0,
                   gain_db=(50.0, 60.0), speckle_scale=4.0, noise_level=0.25, n_vessels=(1, 2)),
    "ph1-22": dict(class_subset=CLASS_NAMES, scanner_freq_mhz=22.0,
                   gain_db=(50.0, 60.0), speckle_scale=2.5, noise_level=0.35, n_vessels=(1, 2)),
    "ph2-12": dict(class_subset=CLASS_NAMES, scanner_freq_mhz=12.0,
                   gain_db=(50.0, 60.0), speckle_scale=4.0, noise_level=0.25,
                   artifact_prob=0.6, n_vessels=(1, 3)),
    "p12": dict(class_subset=("background", "artery", "vein"), scanner_freq_mhz=12.0,
                gain_db=(45.0, 65.0), speckle_scale=4.0, noise_level=0.3, n_vessels=(1, 2)),
}


def make_role_dataset(
    role: str,
    n_train: int,
    n_test: int,
    image_size: tuple[int, int] = (64, 64),
    seed: int = 0,
    name: str | None = None,
) -> DatasetBundle:
    """Generate a registry dataset for one scanner role and split it."""
    if role not in ROLE_PRESETS:
        raise ValidationError(f"unknown role {role!r}; known: {sorted(ROLE_PRESETS)}")
    preset = dict(ROLE_PRESETS[role])
    spec = PhantomSpec(
        name=name or role,
        image_size=image_size,
        n_frames=n_train + n_test,
        seed=seed,
        role_tag=role,
        **preset,
    )
    descriptor, frames = generate_phantom_dataset(spec)
    descriptor.n_train = n_train
    descriptor.n_test = n_test
    return DatasetBundle(descriptor, frames[:n_train], frames[n_train:])
