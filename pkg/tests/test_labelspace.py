import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from greenview.errors import CatalogError, UnknownColor, UnmappedClass
from greenview.labelspace import (
    VOID,
    ClassCatalog,
    ClassDef,
    RemapTable,
    bundled_path,
    class_histogram,
    colorize,
    decode_label_image,
    load_catalog,
    load_remap_table,
    one_hot,
    remap,
    write_catalog,
)

from conftest import random_labels

TOY = ClassCatalog((ClassDef("a", (10, 20, 30)), ClassDef("b", (200, 0, 0), True)), (0, 0, 0))


def test_bundled_camvid_catalog(camvid32, camvid7):
    assert camvid32.C == 31
    assert camvid32.void_color == (0, 0, 0)
    assert [camvid32.classes[i].name for i in camvid32.greenery] == ["Tree", "VegetationMisc"]
    assert camvid7.names == ["Road", "RoadShoulder", "Sidewalk", "Sky", "Tree", "VegetationMisc", "Others"]


def test_catalog_rejects_duplicates():
    with pytest.raises(CatalogError):
        ClassCatalog((ClassDef("a", (1, 2, 3)), ClassDef("a", (4, 5, 6))))
    with pytest.raises(CatalogError):
        ClassCatalog((ClassDef("a", (1, 2, 3)), ClassDef("b", (0, 0, 0))), (0, 0, 0))
    with pytest.raises(CatalogError):
        ClassCatalog((ClassDef("a", (1, 2, 3)),))


def test_catalog_csv_roundtrip(tmp_path):
    write_catalog(TOY, tmp_path / "c.csv", tmp_path / "g.txt")
    assert load_catalog(tmp_path / "c.csv", tmp_path / "g.txt") == TOY


def test_catalog_requires_void_row(tmp_path):
    (tmp_path / "c.csv").write_text("name,r,g,b\na,1,2,3\nb,4,5,6\n")
    with pytest.raises(CatalogError):
        load_catalog(tmp_path / "c.csv")


def test_decode_all_void():
    y = decode_label_image(np.zeros((3, 4, 3), np.uint8), TOY)
    assert (y == VOID).all()
    assert class_histogram(y, TOY.C).valid == 0


def test_decode_2x2():
    px = np.array([[[10, 20, 30], [10, 20, 30]], [[200, 0, 0], [0, 0, 0]]], np.uint8)
    y = decode_label_image(px, TOY)
    np.testing.assert_array_equal(y, [[0, 0], [1, VOID]])
    assert class_histogram(y, 2).valid == 3


def test_decode_unknown_color_strict_and_lenient():
    px = np.zeros((2, 2, 3), np.uint8)
    px[1, 0] = (9, 9, 9)
    with pytest.raises(UnknownColor) as e:
        decode_label_image(px, TOY)
    assert e.value.position == (1, 0) and e.value.color == (9, 9, 9)
    assert (decode_label_image(px, TOY, unknown_as_void=True) == VOID).all()


@settings(max_examples=50, deadline=None)
@given(arrays(np.int64, (5, 7), elements=st.integers(-1, 30)))
def test_decode_colorize_roundtrip(y):
    cat = load_catalog(bundled_path("camvid32_class_dict.csv"))
    y = np.where(y < 0, VOID, y)
    np.testing.assert_array_equal(decode_label_image(colorize(y, cat), cat), y)


def test_one_hot_examples():
    np.testing.assert_array_equal(one_hot(np.array([[0]]), 2)[0, 0], [1, 0])
    np.testing.assert_array_equal(one_hot(np.array([[VOID]]), 2)[0, 0], [0, 0])
    np.testing.assert_array_equal(one_hot(np.array([[1], [0]]), 3)[:, 0], [[0, 1, 0], [1, 0, 0]])


def test_one_hot_channel_sums(rng):
    y = random_labels(rng, (9, 9), 4, 0.3)
    np.testing.assert_array_equal(one_hot(y, 4).sum(-1), (y != VOID).astype(float))


def test_histogram_examples(rng):
    h = class_histogram(np.full((2, 3), VOID), 3)
    assert h.counts.tolist() == [0, 0, 0] and h.void == 6
    h = class_histogram(np.array([[0, 0], [1, VOID]]), 2)
    assert h.counts.tolist() == [2, 1] and h.void == 1

    y = random_labels(rng, (8, 8), 5, 0.2)
    tally = [0] * 5
    void = 0
    for v in y.ravel():
        if v == VOID:
            void += 1
        else:
            tally[v] += 1
    h = class_histogram(y, 5)
    assert h.counts.tolist() == tally and h.void == void
    assert h.counts.sum() + h.void == 64


@pytest.fixture(scope="module")
def table7():
    src = load_catalog(bundled_path("camvid32_class_dict.csv"))
    dst = load_catalog(bundled_path("camvid7_class_dict.csv"))
    return src, load_remap_table(bundled_path("camvid7_remap.csv"), src, dst)


def test_remap_identity(rng):
    y = random_labels(rng, (6, 6), 2)
    np.testing.assert_array_equal(remap(y, RemapTable.identity(TOY)), y)


def test_remap_to_seven_classes(table7):
    src, table = table7
    y = np.arange(src.C).reshape(1, -1)
    out = remap(y, table)
    names = {table.target_catalog.classes[i].name for i in np.unique(out)}
    assert names == {"Road", "RoadShoulder", "Sidewalk", "Sky", "Tree", "VegetationMisc", "Others"}


def test_remap_hand_example(table7):
    src, table = table7
    t = table.target_catalog
    y = np.array([[src.index("Tree"), src.index("Car")], [VOID, src.index("Sky")]])
    expected = np.array([[t.index("Tree"), t.index("Others")], [VOID, t.index("Sky")]])
    np.testing.assert_array_equal(remap(y, table), expected)


def test_remap_unmapped_index(table7):
    _, table = table7
    with pytest.raises(UnmappedClass):
        remap(np.array([[40]]), table)


def test_remap_pushforward_and_void(table7, rng):
    src, table = table7
    y = random_labels(rng, (8, 8), src.C, 0.2)
    out = remap(y, table)
    np.testing.assert_array_equal(out == VOID, y == VOID)
    before = class_histogram(y, src.C)
    after = class_histogram(out, table.target_catalog.C)
    np.testing.assert_array_equal(after.counts, table.pushforward(before.counts))
    assert after.void == before.void


def test_remap_table_rejects_void_and_gaps(tmp_path):
    (tmp_path / "t.csv").write_text("source,target\na,b\n")
    with pytest.raises(CatalogError):
        load_remap_table(tmp_path / "t.csv", TOY, TOY)
    (tmp_path / "t.csv").write_text("source,target\na,a\nb,a\n")
    with pytest.raises(CatalogError):  # target b has no source
        load_remap_table(tmp_path / "t.csv", TOY, TOY)
    (tmp_path / "t.csv").write_text("source,target\na,a\nb,b\nVoid,a\n")
    with pytest.raises(CatalogError):
        load_remap_table(tmp_path / "t.csv", TOY, TOY)
