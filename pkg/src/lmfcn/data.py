"""Datasets: synthetic striped textures, PNG directory I/O, stratified
splitting, and the uniform local binary pattern extractor.

A dataset directory holds one subdirectory per class, each containing 8-bit
PNGs; labels are assigned by sorted subdirectory name. The synthetic
generator draws per-image stripe angle and period from per-class Gaussians,
renders a sinusoidal pattern, and adds pixel noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# radius-1 neighborhood, clockwise from the top-left corner; bit i has weight 2^i
LBP_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, 1),
               (1, 1), (1, 0), (1, -1), (0, -1))
LBP_BINS = 59


@dataclass
class Dataset:
    images: np.ndarray          # (n, 3, h, w) float64 in [0, 1]
    labels: np.ndarray          # (n,) int class indices
    names: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images vs {len(self.labels)} labels")
        if not self.names:
            self.names = [f"img{i:05d}" for i in range(len(self.labels))]

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(images=self.images[indices],
                       labels=self.labels[indices],
                       names=[self.names[i] for i in indices])


@dataclass
class StripeSpec:
    """Per-class Gaussian distribution over stripe geometry."""

    angle_mean: float           # radians
    angle_std: float
    period_mean: float          # pixels, > 2
    period_std: float
    phase_jitter: float = 1.0   # phase ~ U(0, 2*pi*phase_jitter)
    noise_std: float = 0.05

    def __post_init__(self):
        if min(self.angle_std, self.period_std, self.phase_jitter, self.noise_std) < 0:
            raise ValueError("spread parameters must be non-negative")
        if self.period_mean <= 2:
            raise ValueError(f"period mean must exceed 2 px, got {self.period_mean}")

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in
                ("angle_mean", "angle_std", "period_mean", "period_std",
                 "phase_jitter", "noise_std")}

    @classmethod
    def from_dict(cls, d: dict) -> "StripeSpec":
        return cls(**d)


def default_stripe_specs() -> list:
    """Two classes separated by stripe orientation: 30 and 60 degrees."""
    return [
        StripeSpec(angle_mean=np.deg2rad(30), angle_std=np.deg2rad(5),
                   period_mean=8.0, period_std=1.0),
        StripeSpec(angle_mean=np.deg2rad(60), angle_std=np.deg2rad(5),
                   period_mean=8.0, period_std=1.0),
    ]


def gen_gaussian_stripes(specs, n_per_class: int, size: int = 64,
                         seed: int = 0) -> Dataset:
    """Render n_per_class sinusoidal stripe images for each class spec."""
    if size % 4 != 0:
        raise ValueError(f"image size must be divisible by 4, got {size}")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    images = []
    labels = []
    names = []
    for cls, spec in enumerate(specs):
        for i in range(n_per_class):
            angle = rng.normal(spec.angle_mean, spec.angle_std)
            period = max(rng.normal(spec.period_mean, spec.period_std), 2.0)
            phase = rng.uniform(0.0, 2.0 * np.pi * spec.phase_jitter)
            wave = np.sin((2.0 * np.pi / period)
                          * (xx * np.cos(angle) + yy * np.sin(angle)) + phase)
            img = 0.5 + 0.5 * wave
            if spec.noise_std > 0:
                img = img + rng.normal(0.0, spec.noise_std, size=img.shape)
            img = np.clip(img, 0.0, 1.0)
            images.append(np.broadcast_to(img, (3, size, size)).copy())
            labels.append(cls)
            names.append(f"c{cls}_{i:05d}")
    return Dataset(images=np.stack(images), labels=np.asarray(labels), names=names)


def save_dataset(dataset: Dataset, root) -> None:
    """Write one PNG per image into class subdirectories under ``root``."""
    root = Path(root)
    for i in range(len(dataset)):
        cls_dir = root / f"class_{dataset.labels[i]}"
        cls_dir.mkdir(parents=True, exist_ok=True)
        arr = np.round(dataset.images[i] * 255.0).astype(np.uint8)
        Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(
            cls_dir / f"{dataset.names[i]}.png")


def load_image_dir(root) -> Dataset:
    """Load a class-per-subdirectory PNG tree; labels follow sorted dir names."""
    root = Path(root)
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise ValueError(f"no class subdirectories under {root}")
    images = []
    labels = []
    names = []
    for cls, cls_dir in enumerate(class_dirs):
        files = sorted(cls_dir.glob("*.png"))
        if not files:
            raise ValueError(f"class directory {cls_dir} contains no PNG files")
        for path in files:
            try:
                with Image.open(path) as im:
                    arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
            except Exception as exc:
                raise ValueError(f"cannot read image {path}: {exc}") from exc
            images.append(arr.transpose(2, 0, 1))
            labels.append(cls)
            names.append(f"{cls_dir.name}/{path.stem}")
    return Dataset(images=np.stack(images), labels=np.asarray(labels), names=names)


def _largest_remainder_quotas(count: int, ratios) -> list:
    exact = [count * r for r in ratios]
    quotas = [int(np.floor(e)) for e in exact]
    remainder = count - sum(quotas)
    by_frac = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - quotas[i]), i))
    for i in by_frac[:remainder]:
        quotas[i] += 1
    return quotas


def split(dataset: Dataset, ratios=(0.6, 0.2, 0.2), seed: int = 0):
    """Stratified split into (train, val, test) with largest-remainder quotas."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    buckets = [[] for _ in ratios]
    for cls in range(dataset.n_classes):
        members = np.flatnonzero(dataset.labels == cls)
        quotas = _largest_remainder_quotas(len(members), ratios)
        if min(quotas) < 1:
            raise ValueError(f"class {cls} has only {len(members)} instances, "
                             f"too few for split ratios {tuple(ratios)}")
        members = rng.permutation(members)
        start = 0
        for bucket, quota in zip(buckets, quotas):
            bucket.extend(members[start:start + quota].tolist())
            start += quota
    return tuple(dataset.subset(sorted(b)) for b in buckets)


def _uniform_pattern_lut() -> np.ndarray:
    """Map each 8-bit pattern to a histogram bin.

    Patterns with at most 2 circular transitions get their own bin (in
    ascending pattern order); everything else shares the final bin.
    """
    lut = np.full(256, LBP_BINS - 1, dtype=np.intp)
    next_bin = 0
    for pattern in range(256):
        bits = [(pattern >> i) & 1 for i in range(8)]
        transitions = sum(bits[i] != bits[(i + 1) % 8] for i in range(8))
        if transitions <= 2:
            lut[pattern] = next_bin
            next_bin += 1
    assert next_bin == LBP_BINS - 1
    return lut


_LBP_LUT = _uniform_pattern_lut()


def lbp_features(image: np.ndarray) -> np.ndarray:
    """59-bin uniform LBP histogram of one (3, h, w) image, L1-normalized.

    Each interior pixel compares its 8 radius-1 neighbors against itself
    (strictly greater sets the bit), so a constant image lands every pixel in
    the all-zeros pattern's bin.
    """
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected a (3, h, w) image, got shape {image.shape}")
    h, w = image.shape[1:]
    if h < 3 or w < 3:
        raise ValueError(f"image must be at least 3x3, got {h}x{w}")
    gray = np.tensordot(LUMA_WEIGHTS, image, axes=1)
    center = gray[1:-1, 1:-1]
    pattern = np.zeros(center.shape, dtype=np.intp)
    for bit, (dy, dx) in enumerate(LBP_OFFSETS):
        neighbor = gray[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
        pattern |= (neighbor > center).astype(np.intp) << bit
    hist = np.bincount(_LBP_LUT[pattern].ravel(), minlength=LBP_BINS).astype(np.float64)
    return hist / hist.sum()


def lbp_matrix(dataset: Dataset) -> np.ndarray:
    """Stack per-image LBP histograms into an (n, 59) feature matrix."""
    return np.stack([lbp_features(img) for img in dataset.images])
