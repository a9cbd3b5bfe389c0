"""Class catalogs, color-coded label decoding, one-hot encoding and class reduction.

A label map is a plain integer ``numpy`` array of shape ``(H, W)``.  Valid
entries are class indices ``0..C-1``; void pixels hold the :data:`VOID`
sentinel, which lies outside that range on purpose so it can never be
mistaken for a channel.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import CatalogError, UnknownColor, UnmappedClass

VOID = -1
VOID_NAME = "Void"

__all__ = [
    "VOID",
    "ClassDef",
    "ClassCatalog",
    "RemapTable",
    "Histogram",
    "bundled_path",
    "load_catalog",
    "load_greenery",
    "write_catalog",
    "load_remap_table",
    "decode_label_image",
    "colorize",
    "one_hot",
    "remap",
    "class_histogram",
    "valid_count",
]


@dataclass(frozen=True)
class ClassDef:
    name: str
    color: tuple[int, int, int]
    is_greenery: bool = False


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered non-void classes plus the void color.

    The class index used everywhere else is the position in ``classes``.
    """

    classes: tuple[ClassDef, ...]
    void_color: tuple[int, int, int] = (0, 0, 0)
    _lookup: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.classes) < 2:
            raise CatalogError(f"a catalog needs at least 2 non-void classes, got {len(self.classes)}")
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise CatalogError("class names must be unique")
        if VOID_NAME in names:
            raise CatalogError(f"{VOID_NAME!r} is reserved for the void row")
        colors = [tuple(c.color) for c in self.classes] + [tuple(self.void_color)]
        for col in colors:
            if len(col) != 3 or any(not 0 <= v <= 255 for v in col):
                raise CatalogError(f"invalid RGB color {col}")
        if len(set(colors)) != len(colors):
            raise CatalogError("class colors (including the void color) must be unique")
        object.__setattr__(self, "_lookup", {n: i for i, n in enumerate(names)})

    @property
    def C(self) -> int:
        return len(self.classes)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.classes]

    @property
    def colors(self) -> np.ndarray:
        return np.array([c.color for c in self.classes], dtype=np.uint8)

    def index(self, name: str) -> int:
        try:
            return self._lookup[name]
        except KeyError:
            raise CatalogError(f"unknown class name {name!r}") from None

    @property
    def greenery(self) -> list[int]:
        return [i for i, c in enumerate(self.classes) if c.is_greenery]

    def with_greenery(self, names: Iterable[str]) -> "ClassCatalog":
        names = set(names)
        for n in names:
            self.index(n)
        return ClassCatalog(
            tuple(ClassDef(c.name, c.color, c.name in names) for c in self.classes),
            self.void_color,
        )

    def to_dict(self) -> dict:
        return {
            "classes": [
                {"name": c.name, "color": list(c.color), "greenery": c.is_greenery} for c in self.classes
            ],
            "void_color": list(self.void_color),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassCatalog":
        return cls(
            tuple(ClassDef(c["name"], tuple(c["color"]), bool(c["greenery"])) for c in d["classes"]),
            tuple(d["void_color"]),
        )


def bundled_path(name: str) -> Path:
    """Path of a data file shipped with the package (e.g. ``camvid7_remap.csv``)."""
    return Path(str(resources.files("greenview") / "data" / name))


def load_greenery(path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [line.strip() for line in f if line.strip()]


def load_catalog(path, greenery=None) -> ClassCatalog:
    """Read a ``name,r,g,b`` class dictionary.

    ``greenery`` is either a path to a names file or an iterable of names.
    """
    classes = []
    void_color = None
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or [h.strip() for h in reader.fieldnames] != ["name", "r", "g", "b"]:
            raise CatalogError(f"{path}: expected header name,r,g,b")
        for row in reader:
            name = row["name"].strip()
            try:
                color = tuple(int(row[k]) for k in "rgb")
            except (TypeError, ValueError):
                raise CatalogError(f"{path}: bad color in row {row}") from None
            if name == VOID_NAME:
                if void_color is not None:
                    raise CatalogError(f"{path}: more than one {VOID_NAME} row")
                void_color = color
            else:
                classes.append(ClassDef(name, color))
    if void_color is None:
        raise CatalogError(f"{path}: missing {VOID_NAME} row")
    cat = ClassCatalog(tuple(classes), void_color)
    if greenery is not None:
        names = load_greenery(greenery) if isinstance(greenery, (str, Path)) else list(greenery)
        cat = cat.with_greenery(names)
    return cat


def write_catalog(catalog: ClassCatalog, path, greenery_path=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["name", "r", "g", "b"])
        for c in catalog.classes:
            w.writerow([c.name, *c.color])
        w.writerow([VOID_NAME, *catalog.void_color])
    if greenery_path is not None:
        with open(greenery_path, "w", encoding="utf-8") as f:
            f.writelines(catalog.classes[i].name + "\n" for i in catalog.greenery)


def _pack(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.int64)
    return (rgb[..., 0] << 16) | (rgb[..., 1] << 8) | rgb[..., 2]


def decode_label_image(pixels: np.ndarray, catalog: ClassCatalog, unknown_as_void: bool = False) -> np.ndarray:
    """Map an ``(H, W, 3)`` color-coded label image to class indices by exact color match."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise CatalogError(f"expected an (H, W, 3) RGB array, got shape {pixels.shape}")
    keys = np.concatenate([_pack(catalog.colors), [_pack(np.array(catalog.void_color))]])
    values = np.concatenate([np.arange(catalog.C), [VOID]])
    order = np.argsort(keys)
    keys, values = keys[order], values[order]

    packed = _pack(pixels)
    pos = np.clip(np.searchsorted(keys, packed), 0, len(keys) - 1)
    hit = keys[pos] == packed
    out = np.where(hit, values[pos], VOID).astype(np.int64)
    if not unknown_as_void and not hit.all():
        r, c = np.argwhere(~hit)[0]
        raise UnknownColor(pixels[r, c], (r, c))
    return out


def colorize(y: np.ndarray, catalog: ClassCatalog) -> np.ndarray:
    """Inverse of :func:`decode_label_image`; returns uint8 ``(H, W, 3)``."""
    y = np.asarray(y)
    palette = np.vstack([catalog.colors, np.array(catalog.void_color, dtype=np.uint8)])
    idx = np.where(y == VOID, catalog.C, y)
    if idx.min(initial=0) < 0 or idx.max(initial=0) > catalog.C:
        raise CatalogError("label map holds indices outside the catalog")
    return palette[idx]


def one_hot(y: np.ndarray, C: int) -> np.ndarray:
    """``(H, W, C)`` float array; all-zero at void pixels."""
    y = np.asarray(y)
    return (y[..., None] == np.arange(C)).astype(np.float64)


class Histogram(NamedTuple):
    counts: np.ndarray
    void: int

    @property
    def valid(self) -> int:
        return int(self.counts.sum())


def class_histogram(y: np.ndarray, C: int) -> Histogram:
    y = np.asarray(y).ravel()
    valid = y != VOID
    counts = np.bincount(y[valid], minlength=C).astype(np.int64)
    if counts.size > C:
        raise CatalogError(f"label map holds class index {int(y[valid].max())} >= C={C}")
    return Histogram(counts, int((~valid).sum()))


def valid_count(y: np.ndarray) -> int:
    return int(np.count_nonzero(np.asarray(y) != VOID))


@dataclass(frozen=True)
class RemapTable:
    mapping: np.ndarray
    target_catalog: ClassCatalog

    def __post_init__(self):
        m = np.asarray(self.mapping, dtype=np.int64)
        if m.ndim != 1 or (m < 0).any() or (m >= self.target_catalog.C).any():
            raise CatalogError("remap targets must be valid target class indices")
        missing = set(range(self.target_catalog.C)) - set(m.tolist())
        if missing:
            names = sorted(self.target_catalog.classes[i].name for i in missing)
            raise CatalogError(f"target classes with no source: {names}")
        object.__setattr__(self, "mapping", m)

    @classmethod
    def identity(cls, catalog: ClassCatalog) -> "RemapTable":
        return cls(np.arange(catalog.C), catalog)

    def pushforward(self, counts: np.ndarray) -> np.ndarray:
        """Histogram of the remapped map, computed from the source histogram."""
        out = np.zeros(self.target_catalog.C, dtype=np.int64)
        np.add.at(out, self.mapping, np.asarray(counts, dtype=np.int64))
        return out


def load_remap_table(path, source: ClassCatalog, target: ClassCatalog) -> RemapTable:
    """Read a ``source,target`` CSV of class names into a total :class:`RemapTable`."""
    mapping = np.full(source.C, -1, dtype=np.int64)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or [h.strip() for h in reader.fieldnames] != ["source", "target"]:
            raise CatalogError(f"{path}: expected header source,target")
        for row in reader:
            s, t = row["source"].strip(), row["target"].strip()
            if VOID_NAME in (s, t):
                raise CatalogError(f"{path}: void is never remapped")
            si = source.index(s)
            if mapping[si] != -1:
                raise CatalogError(f"{path}: source {s!r} listed twice")
            mapping[si] = target.index(t)
    unmapped = [source.classes[i].name for i in np.flatnonzero(mapping < 0)]
    if unmapped:
        raise CatalogError(f"{path}: no target for source classes {unmapped}")
    return RemapTable(mapping, target)


def remap(y: np.ndarray, table: RemapTable) -> np.ndarray:
    y = np.asarray(y)
    valid = y != VOID
    src = y[valid]
    bad = (src < 0) | (src >= table.mapping.size)
    if bad.any():
        raise UnmappedClass(src[bad][0])
    out = np.full(y.shape, VOID, dtype=np.int64)
    out[valid] = table.mapping[src]
    return out


def greenery_mask(y: np.ndarray, greenery: Sequence[int]) -> np.ndarray:
    return np.isin(np.asarray(y), np.asarray(list(greenery), dtype=np.int64))
