"""CamVid-style dataset directories: PNG I/O, pairing and splits.

Layout::

    root/images/<id>.png
    root/labels/<id>_L.png
    root/class_dict.csv
    root/greenery.txt
    root/splits/{train,val,test}.txt     (optional, one id per line)
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError, DuplicateId, MissingLabel, SplitOverlap
from .labelspace import ClassCatalog, colorize, decode_label_image, load_catalog

SPLITS = ("train", "val", "test")
CAMVID_SPLIT_SIZES = (421, 112, 168)
LABEL_SUFFIX = "_L"


def read_png(path) -> np.ndarray:
    """Load an 8-bit RGB PNG as ``(H, W, 3)`` uint8."""
    with Image.open(path) as im:
        if im.format != "PNG":
            raise DataError(f"{path}: only PNG is supported, got {im.format}")
        if im.mode != "RGB":
            raise DataError(f"{path}: expected 8-bit RGB, got mode {im.mode}")
        return np.asarray(im, dtype=np.uint8).copy()


def write_png(path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8 or pixels.ndim != 3 or pixels.shape[2] != 3:
        raise DataError("write_png expects (H, W, 3) uint8")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels, "RGB").save(path, format="PNG")


def read_label(path, catalog: ClassCatalog, unknown_as_void: bool = False) -> np.ndarray:
    return decode_label_image(read_png(path), catalog, unknown_as_void)


def write_label(path, y: np.ndarray, catalog: ClassCatalog) -> None:
    write_png(path, colorize(y, catalog))


def label_id(path) -> str:
    stem = Path(path).stem
    return stem[: -len(LABEL_SUFFIX)] if stem.endswith(LABEL_SUFFIX) else stem


@dataclass(frozen=True)
class Pair:
    image_id: str
    image: Path
    label: Path


@dataclass
class DatasetManifest:
    root: Path
    pairs: list[Pair]
    split: dict[str, str] = field(default_factory=dict)

    def ids(self, split: str | None = None) -> list[str]:
        if split is None:
            return [p.image_id for p in self.pairs]
        return [p.image_id for p in self.pairs if self.split.get(p.image_id) == split]

    def subset(self, split: str) -> list[Pair]:
        return [p for p in self.pairs if self.split.get(p.image_id) == split]

    def split_sizes(self) -> dict[str, int]:
        return {s: sum(1 for v in self.split.values() if v == s) for s in SPLITS}

    def catalog(self) -> ClassCatalog:
        g = self.root / "greenery.txt"
        return load_catalog(self.root / "class_dict.csv", g if g.exists() else None)

    def to_dict(self) -> dict:
        return {
            "root": str(self.root),
            "pairs": [
                {"id": p.image_id, "image": str(p.image.relative_to(self.root)),
                 "label": str(p.label.relative_to(self.root)), "split": self.split.get(p.image_id)}
                for p in self.pairs
            ],
        }


def write_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=1, sort_keys=True) + "\n")


def read_manifest(path) -> DatasetManifest:
    d = json.loads(Path(path).read_text())
    root = Path(d["root"])
    pairs, split = [], {}
    for e in d["pairs"]:
        pairs.append(Pair(e["id"], root / e["image"], root / e["label"]))
        if e.get("split"):
            split[e["id"]] = e["split"]
    return DatasetManifest(root, pairs, split)


def read_split_files(split_dir) -> dict[str, str]:
    split_dir = Path(split_dir)
    assignment: dict[str, str] = {}
    for name in SPLITS:
        f = split_dir / f"{name}.txt"
        if not f.exists():
            continue
        seen = set()
        for line in f.read_text().splitlines():
            image_id = line.strip()
            if not image_id:
                continue
            if image_id in seen:
                raise DuplicateId(image_id)
            seen.add(image_id)
            if image_id in assignment:
                raise SplitOverlap(image_id, assignment[image_id], name)
            assignment[image_id] = name
    return assignment


def scan_dataset(root, split_dir=None) -> DatasetManifest:
    """Pair ``images/*.png`` with ``labels/*_L.png`` and attach split membership.

    Split files default to ``root/splits``.  When split files exist they must
    cover every image exactly once.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} does not exist")
    images = sorted((root / "images").glob("*.png")) if (root / "images").is_dir() else []
    labels = {}
    if (root / "labels").is_dir():
        for lp in sorted((root / "labels").glob("*.png")):
            labels[label_id(lp)] = lp
    pairs, seen = [], set()
    for ip in images:
        image_id = ip.stem
        if image_id in seen:
            raise DuplicateId(image_id)
        seen.add(image_id)
        if image_id not in labels:
            raise MissingLabel(image_id)
        pairs.append(Pair(image_id, ip, labels[image_id]))

    split_dir = Path(split_dir) if split_dir is not None else root / "splits"
    split = read_split_files(split_dir) if split_dir.is_dir() else {}
    if split:
        unknown = sorted(set(split) - seen)
        if unknown:
            raise DataError(f"split files name unknown image {unknown[0]!r}")
        unassigned = sorted(seen - set(split))
        if unassigned:
            raise DataError(f"image {unassigned[0]!r} is not in any split file")
    return DatasetManifest(root, pairs, split)


def default_splits(ids, sizes=CAMVID_SPLIT_SIZES) -> dict[str, str]:
    """Assign sorted ids to train/val/test in order.

    With exactly ``sum(sizes)`` ids the sizes are used as is; otherwise they
    are scaled to the id count (largest remainder).
    """
    ids = sorted(ids)
    n = len(ids)
    total = sum(sizes)
    if n == total:
        counts = list(sizes)
    else:
        raw = [n * s / total for s in sizes]
        counts = [int(r) for r in raw]
        order = sorted(range(len(sizes)), key=lambda i: raw[i] - counts[i], reverse=True)
        for i in order[: n - sum(counts)]:
            counts[i] += 1
    out, pos = {}, 0
    for name, c in zip(SPLITS, counts):
        for image_id in ids[pos:pos + c]:
            out[image_id] = name
        pos += c
    return out


def write_split_files(split: dict[str, str], split_dir) -> None:
    split_dir = Path(split_dir)
    split_dir.mkdir(parents=True, exist_ok=True)
    for name in SPLITS:
        ids = sorted(i for i, s in split.items() if s == name)
        (split_dir / f"{name}.txt").write_text("".join(i + "\n" for i in ids))


def load_pairs(pairs, catalog: ClassCatalog, unknown_as_void: bool = False):
    """Yield ``(id, image float64 in [0,1], label map)`` for each pair."""
    for p in pairs:
        img = read_png(p.image).astype(np.float64) / 255.0
        y = read_label(p.label, catalog, unknown_as_void)
        if img.shape[:2] != y.shape:
            raise DataError(f"{p.image_id}: image {img.shape[:2]} and label {y.shape} sizes differ")
        yield p.image_id, img, y
