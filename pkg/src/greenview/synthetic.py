"""Seeded synthetic segmentation sets with controlled class imbalance.

Class 0 is the majority background; each other class owns exactly
``round(minority * H * W)`` pixels per image, laid out as disks or as a
straight band.  Image colors are a per-class base color plus Gaussian
noise, so the task is learnable but not trivial.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidSpec
from .labelspace import VOID, ClassCatalog, ClassDef, write_catalog
from .dataset_io import write_label, write_png

SHAPES = ("disks", "stripes")

# base image colors in [0, 1]; class 0 first
_BASE_COLORS = np.array([
    [0.45, 0.45, 0.50],
    [0.35, 0.60, 0.30],
    [0.65, 0.35, 0.35],
    [0.35, 0.40, 0.70],
    [0.70, 0.65, 0.30],
    [0.60, 0.35, 0.65],
    [0.30, 0.65, 0.65],
    [0.80, 0.50, 0.20],
])

_LABEL_COLORS = [
    (128, 128, 128), (0, 160, 0), (200, 0, 0), (0, 0, 200),
    (200, 200, 0), (160, 0, 160), (0, 160, 160), (230, 120, 0),
]


@dataclass(frozen=True)
class SyntheticSpec:
    count: int = 64
    height: int = 32
    width: int = 32
    classes: int = 2
    minority: float = 0.05
    shape: str = "disks"
    noise: float = 0.1
    seed: int = 0
    void: float = 0.0

    def validate(self) -> None:
        if self.count < 1 or self.height < 1 or self.width < 1:
            raise InvalidSpec("count, height and width must be positive")
        if not 2 <= self.classes <= len(_BASE_COLORS):
            raise InvalidSpec(f"classes must be in 2..{len(_BASE_COLORS)}")
        if not 0 < self.minority <= 1.0 / self.classes:
            raise InvalidSpec(f"minority fraction must be in (0, 1/classes], got {self.minority}")
        if self.minority_pixels < 1:
            raise InvalidSpec("minority fraction leaves no minority pixel at this size")
        if self.shape not in SHAPES:
            raise InvalidSpec(f"shape must be one of {SHAPES}")
        if self.noise < 0:
            raise InvalidSpec("noise must be >= 0")
        if not 0 <= self.void < 1:
            raise InvalidSpec("void fraction must be in [0, 1)")
        n = self.height * self.width
        if (self.classes - 1) * self.minority_pixels + self.void_pixels >= n:
            raise InvalidSpec("minority and void pixels leave no background")

    @property
    def minority_pixels(self) -> int:
        return int(round(self.minority * self.height * self.width))

    @property
    def void_pixels(self) -> int:
        return int(round(self.void * self.height * self.width))


def synthetic_catalog(classes: int) -> ClassCatalog:
    names = ["Background", "Vegetation"] + [f"Class{i}" for i in range(2, classes)]
    return ClassCatalog(
        tuple(ClassDef(n, _LABEL_COLORS[i], n == "Vegetation") for i, n in enumerate(names)),
        (0, 0, 0),
    )


def _claim_nearest(free: np.ndarray, score: np.ndarray, n: int) -> np.ndarray:
    """Flat indices of the ``n`` free pixels with the smallest score (stable on ties)."""
    idx = np.flatnonzero(free)
    order = np.argsort(score.ravel()[idx], kind="stable")
    return idx[order[:n]]


def _layout(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    h, w = spec.height, spec.width
    n = spec.minority_pixels
    rows, cols = np.mgrid[0:h, 0:w]
    y = np.zeros(h * w, dtype=np.int64)
    free = np.ones(h * w, dtype=bool)
    if spec.shape == "disks":
        for c in range(1, spec.classes):
            k = int(rng.integers(1, 3)) if n >= 8 else 1
            sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
            for size in sizes:
                cy, cx = rng.uniform(0, h), rng.uniform(0, w)
                dist = (rows + 0.5 - cy) ** 2 + (cols + 0.5 - cx) ** 2
                take = _claim_nearest(free, dist, size)
                y[take] = c
                free[take] = False
    else:
        theta = rng.uniform(0, np.pi)
        proj = rows * np.cos(theta) + cols * np.sin(theta)
        order = np.argsort(proj.ravel(), kind="stable")
        sizes = [h * w - (spec.classes - 1) * n] + [n] * (spec.classes - 1)
        perm = rng.permutation(spec.classes)
        pos = 0
        for c in perm:
            y[order[pos:pos + sizes[c]]] = c
            pos += sizes[c]
        free = y == 0
    if spec.void_pixels:
        bg = np.flatnonzero(free & (y == 0))
        y[rng.choice(bg, size=spec.void_pixels, replace=False)] = VOID
    return y.reshape(h, w)


def generate_synthetic(spec: SyntheticSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """``count`` pairs of (uint8 ``(H, W, 3)`` image, label map); bit-identical per seed."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    out = []
    for _ in range(spec.count):
        y = _layout(spec, rng)
        base = _BASE_COLORS[np.where(y == VOID, 0, y)]
        img = base + rng.normal(0.0, spec.noise, size=base.shape) if spec.noise > 0 else base
        img = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
        out.append((img, y))
    return out


def write_synthetic_dataset(samples, out_dir, catalog: ClassCatalog | None = None, prefix: str = "synth") -> list[str]:
    """Write samples in the dataset directory layout; returns the image ids."""
    out_dir = Path(out_dir)
    if catalog is None:
        catalog = synthetic_catalog(int(max(y.max() for _, y in samples)) + 1)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)
    write_catalog(catalog, out_dir / "class_dict.csv", out_dir / "greenery.txt")
    ids = []
    width = max(4, len(str(len(samples) - 1)))
    for i, (img, y) in enumerate(samples):
        image_id = f"{prefix}_{i:0{width}d}"
        write_png(out_dir / "images" / f"{image_id}.png", img)
        write_label(out_dir / "labels" / f"{image_id}_L.png", y, catalog)
        ids.append(image_id)
    return ids
