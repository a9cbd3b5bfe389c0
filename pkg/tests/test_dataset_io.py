import numpy as np
import pytest

from greenview.dataset_io import (
    CAMVID_SPLIT_SIZES,
    default_splits,
    load_pairs,
    read_manifest,
    read_png,
    scan_dataset,
    write_manifest,
    write_png,
    write_split_files,
)
from greenview.errors import DataError, DuplicateId, InvalidSpec, MissingLabel, SplitOverlap
from greenview.labelspace import VOID, class_histogram
from greenview.lossfn import image_weights
from greenview.synthetic import SyntheticSpec, generate_synthetic, synthetic_catalog, write_synthetic_dataset


def _tiny_dataset(root, n=5, **kw):
    spec = SyntheticSpec(count=n, height=8, width=8, minority=0.1, seed=1, **kw)
    return write_synthetic_dataset(generate_synthetic(spec), root, synthetic_catalog(2))


def test_png_roundtrip(tmp_path, rng):
    px = rng.integers(0, 256, (5, 7, 3)).astype(np.uint8)
    write_png(tmp_path / "a.png", px)
    assert (read_png(tmp_path / "a.png") == px).all()


def test_png_rejects_other_formats(tmp_path):
    from PIL import Image

    Image.new("RGB", (4, 4)).save(tmp_path / "a.jpg")
    with pytest.raises(DataError):
        read_png(tmp_path / "a.jpg")
    Image.new("L", (4, 4)).save(tmp_path / "g.png")
    with pytest.raises(DataError):
        read_png(tmp_path / "g.png")


def test_scan_empty_directory(tmp_path):
    m = scan_dataset(tmp_path)
    assert m.pairs == [] and m.split == {}


def test_scan_pairs_and_loads(tmp_path):
    ids = _tiny_dataset(tmp_path)
    m = scan_dataset(tmp_path)
    assert m.ids() == ids
    loaded = list(load_pairs(m.pairs, m.catalog()))
    assert len(loaded) == 5
    _, img, y = loaded[0]
    assert img.shape == (8, 8, 3) and 0 <= img.min() and img.max() <= 1 and y.shape == (8, 8)


def test_scan_missing_label(tmp_path):
    _tiny_dataset(tmp_path)
    next((tmp_path / "labels").glob("*.png")).unlink()
    with pytest.raises(MissingLabel):
        scan_dataset(tmp_path)


def test_split_overlap_and_duplicates(tmp_path):
    ids = _tiny_dataset(tmp_path)
    (tmp_path / "splits").mkdir()
    (tmp_path / "splits" / "train.txt").write_text("\n".join(ids[:3]) + "\n")
    (tmp_path / "splits" / "val.txt").write_text("\n".join(ids[2:]) + "\n")
    with pytest.raises(SplitOverlap):
        scan_dataset(tmp_path)
    (tmp_path / "splits" / "val.txt").write_text("\n".join(ids[3:] + ids[3:4]) + "\n")
    with pytest.raises(DuplicateId):
        scan_dataset(tmp_path)


def test_camvid_split_sizes():
    ids = [f"f{i:04d}" for i in range(701)]
    split = default_splits(ids)
    sizes = tuple(sum(1 for v in split.values() if v == s) for s in ("train", "val", "test"))
    assert sizes == CAMVID_SPLIT_SIZES == (421, 112, 168)
    assert split["f0000"] == "train" and split["f0700"] == "test"


def test_scaled_split_sizes():
    split = default_splits([str(i) for i in range(10)])
    assert sorted(split.values()).count("train") == 6
    assert len(split) == 10


def test_manifest_roundtrip(tmp_path):
    ids = _tiny_dataset(tmp_path / "d")
    write_split_files(default_splits(ids), tmp_path / "d" / "splits")
    m = scan_dataset(tmp_path / "d")
    write_manifest(m, tmp_path / "m.json")
    again = read_manifest(tmp_path / "m.json")
    assert again.pairs == m.pairs and again.split == m.split
    rescan = scan_dataset(tmp_path / "d")
    assert rescan.pairs == m.pairs and rescan.split == m.split


# --- synthetic generator --------------------------------------------------


def test_balanced_stripes_have_unit_weights():
    data = generate_synthetic(SyntheticSpec(count=4, height=8, width=8, minority=0.5, shape="stripes", seed=3))
    for _, y in data:
        assert class_histogram(y, 2).counts.tolist() == [32, 32]
        np.testing.assert_array_equal(image_weights(y, 2).weights, [1.0, 1.0])


def test_minority_fraction_disks():
    data = generate_synthetic(SyntheticSpec(count=64, height=32, width=32, minority=0.05, shape="disks", seed=0))
    frac = np.mean([(y == 1).mean() for _, y in data])
    assert 0.04 <= frac <= 0.06


def test_generator_deterministic():
    spec = SyntheticSpec(count=3, height=16, width=16, classes=3, minority=0.1, noise=0.2, seed=9)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    for (i1, y1), (i2, y2) in zip(a, b):
        assert i1.tobytes() == i2.tobytes() and y1.tobytes() == y2.tobytes()


def test_void_fraction_honoured():
    data = generate_synthetic(SyntheticSpec(count=10, height=16, width=16, minority=0.1, void=0.2, seed=2))
    frac = np.mean([(y == VOID).mean() for _, y in data])
    assert abs(frac - 0.2) <= 0.04
    assert all((y != VOID).all() for _, y in generate_synthetic(SyntheticSpec(count=3, height=8, width=8, minority=0.1)))


def test_images_correlate_with_classes():
    data = generate_synthetic(SyntheticSpec(count=8, height=16, width=16, minority=0.2, noise=0.05, seed=4))
    img = np.concatenate([i.reshape(-1, 3) for i, _ in data]).astype(float)
    y = np.concatenate([l.ravel() for _, l in data])
    assert np.linalg.norm(img[y == 0].mean(0) - img[y == 1].mean(0)) > 30


@pytest.mark.parametrize("kw", [dict(minority=0.0), dict(minority=0.6), dict(shape="blobs"), dict(classes=1),
                                dict(height=2, width=2, minority=0.1), dict(noise=-1.0)])
def test_invalid_specs(kw):
    with pytest.raises(InvalidSpec):
        generate_synthetic(SyntheticSpec(count=1, **{"height": 8, "width": 8, **kw}))
