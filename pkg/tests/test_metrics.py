import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from greenview.errors import EmptyImage, EmptyList, ShapeMismatch, UndefinedIoU, UnpairedRecord
from greenview.labelspace import VOID, ClassCatalog, ClassDef
from greenview.metrics import (
    ConfusionMatrix,
    GviRecord,
    accumulate_confusion,
    aggregate_gvi,
    evaluate,
    gvi,
    gvi_error_stats,
    iou,
    mean_iou,
    pearson,
    per_class_iou,
    pixel_accuracy,
    recall,
)

from conftest import random_labels

CAT3 = ClassCatalog(
    (ClassDef("road", (1, 1, 1)), ClassDef("tree", (2, 2, 2), True), ClassDef("grass", (3, 3, 3), True)),
    (0, 0, 0),
)


def test_confusion_perfect_prediction(rng):
    y = rng.integers(0, 3, (5, 5))
    cm = accumulate_confusion(y, y, ConfusionMatrix.empty(3))
    assert (cm.matrix == np.diag(np.diag(cm.matrix))).all()
    assert np.trace(cm.matrix) == 25
    assert all(v == 1.0 for v in per_class_iou(cm) if not np.isnan(v))


def test_confusion_all_void():
    cm0 = ConfusionMatrix.empty(2)
    cm = accumulate_confusion(np.full((3, 3), VOID), np.zeros((3, 3), int), cm0)
    assert cm.total == 0 and cm.void_skipped == 9


def test_confusion_matches_loops(rng):
    gt = random_labels(rng, (8, 8), 4, 0.2)
    pred = rng.integers(0, 4, (8, 8))
    cm = accumulate_confusion(gt, pred, ConfusionMatrix.empty(4))
    ref, void = oracles.confusion(gt, pred, 4)
    assert cm.matrix.tolist() == ref and cm.void_skipped == void


def test_confusion_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        accumulate_confusion(np.zeros((2, 2), int), np.zeros((2, 3), int), ConfusionMatrix.empty(2))


def test_confusion_merge_is_additive(rng):
    pairs = [(random_labels(rng, (4, 4), 3), rng.integers(0, 3, (4, 4))) for _ in range(4)]
    seq = ConfusionMatrix.empty(3)
    for g, p in pairs:
        seq = accumulate_confusion(g, p, seq)
    parts = [accumulate_confusion(g, p, ConfusionMatrix.empty(3)) for g, p in pairs]
    merged = (parts[0] + parts[1]) + (parts[2] + parts[3])
    assert (merged.matrix == seq.matrix).all() and merged.void_skipped == seq.void_skipped


def test_iou_hand_example():
    # class 1: TP=3, FP=1 (gt 0 -> pred 1), FN=1 (gt 1 -> pred 0)
    cm = ConfusionMatrix(np.array([[5, 1], [1, 3]]))
    assert iou(cm, [1]) == pytest.approx(0.6)
    assert iou(cm, [0]) == pytest.approx(5 / 7)
    assert mean_iou(cm) == pytest.approx((0.6 + 5 / 7) / 2)


def test_iou_undefined():
    cm = ConfusionMatrix(np.array([[4, 0, 0], [0, 0, 0], [0, 0, 0]]))
    with pytest.raises(UndefinedIoU):
        iou(cm, [1, 2])
    assert mean_iou(cm) == 1.0  # classes 1 and 2 have empty unions and are skipped


def test_greenery_iou_merges_classes():
    # tree predicted as grass counts as a hit for the merged set
    gt = np.array([[1, 1, 2, 0]])
    pred = np.array([[2, 1, 2, 1]])
    cm = accumulate_confusion(gt, pred, ConfusionMatrix.empty(3))
    assert iou(cm, [1, 2]) == pytest.approx(3 / 4)
    assert iou(cm, [1]) == pytest.approx(1 / 3)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_iou_bounded_by_accuracy(seed):
    rng = np.random.default_rng(seed)
    gt = random_labels(rng, (6, 6), 3, 0.1)
    pred = rng.integers(0, 3, (6, 6))
    cm = accumulate_confusion(gt, pred, ConfusionMatrix.empty(3))
    for subset in ([0], [1], [1, 2]):
        try:
            v = iou(cm, subset)
        except UndefinedIoU:
            continue
        assert 0 <= v <= pixel_accuracy(cm, subset) + 1e-15
        if len(subset) == 1 and not np.isnan(recall(cm, subset[0])):
            assert v <= recall(cm, subset[0]) + 1e-15


def test_gvi_examples():
    assert gvi(np.ones((3, 3), int), [1]).gvi == 1.0
    assert gvi(np.zeros((3, 3), int), [1]).gvi == 0.0
    y = np.zeros((4, 4), int)
    y[0, :4] = 1
    y[3, :2] = VOID
    rec = gvi(y, [1])
    assert (rec.greenery_pixels, rec.valid_pixels) == (4, 14)
    assert rec.gvi == pytest.approx(0.285714285714, rel=1e-11)
    with pytest.raises(EmptyImage):
        gvi(np.full((2, 2), VOID), [1])


def test_aggregate_gvi_sum_of_pixels():
    assert aggregate_gvi([GviRecord("a", 3, 7)]) == GviRecord("a", 3, 7).gvi
    assert aggregate_gvi([GviRecord("a", 10, 100), GviRecord("b", 90, 100)]) == 0.5
    recs = [GviRecord("a", 1, 10), GviRecord("b", 0, 90)]
    assert aggregate_gvi(recs) == pytest.approx(0.01)
    assert np.mean([r.gvi for r in recs]) == pytest.approx(0.05)
    with pytest.raises(EmptyList):
        aggregate_gvi([])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 50), st.integers(1, 50)), min_size=1, max_size=8))
def test_aggregate_within_range(parts):
    recs = [GviRecord(str(i), min(g, v), v) for i, (g, v) in enumerate(parts)]
    agg = aggregate_gvi(recs)
    vals = [r.gvi for r in recs]
    assert min(vals) - 1e-15 <= agg <= max(vals) + 1e-15


def _recs(values, prefix=""):
    return [GviRecord(f"{prefix}{i}", int(round(v * 1000)), 1000) for i, v in enumerate(values)]


def test_error_stats_identity():
    g = _recs([0.1, 0.3, 0.25, 0.6])
    s = gvi_error_stats(g, g)
    assert s.mae_pct == 0 and s.pcc == pytest.approx(1.0) and s.ee_pct == (0.0, 0.0)


def test_error_stats_affine_pcc():
    g = [0.1, 0.3, 0.25, 0.6, 0.05]
    p = [0.5 * v + 0.2 for v in g]
    s = gvi_error_stats(_recs(p), _recs(g))
    assert s.pcc == pytest.approx(1.0, abs=1e-12)


def test_error_stats_against_oracle(rng):
    g = rng.random(23)
    p = np.clip(g + rng.normal(0, 0.1, 23), 0, 1)
    gr = [GviRecord(str(i), int(v * 10**6), 10**6) for i, v in enumerate(g)]
    pr = [GviRecord(str(i), int(v * 10**6), 10**6) for i, v in enumerate(p)]
    pv = [r.gvi for r in pr]
    gv = [r.gvi for r in gr]
    s = gvi_error_stats(pr[::-1], gr)  # pairing is by id, not order
    err = [100 * (a - b) for a, b in zip(pv, gv)]
    assert s.mae_pct == pytest.approx(oracles.mae_pct(pv, gv), abs=1e-9)
    assert s.pcc == pytest.approx(oracles.pearson(pv, gv), abs=1e-12)
    assert s.ee_pct[0] == pytest.approx(oracles.percentile(err, 0.05), abs=1e-9)
    assert s.ee_pct[1] == pytest.approx(oracles.percentile(err, 0.95), abs=1e-9)


def test_error_stats_pcc_undefined_and_unpaired():
    g = _recs([0.2, 0.2, 0.2])
    p = _recs([0.1, 0.3, 0.5])
    assert gvi_error_stats(p, g).pcc is None
    assert gvi_error_stats(_recs([0.1]), _recs([0.2])).pcc is None
    with pytest.raises(UnpairedRecord):
        gvi_error_stats(_recs([0.1, 0.2], "x"), _recs([0.1, 0.2]))


def test_pearson_affine_invariance(rng):
    x = rng.random(30)
    y = x + rng.normal(0, 0.3, 30)
    r = pearson(x, y)
    assert pearson(3.5 * x + 1, 0.2 * y - 4) == pytest.approx(r, abs=1e-12)


def test_evaluate_perfect(rng):
    pairs = []
    for i in range(4):
        y = random_labels(rng, (6, 6), 3, 0.1)
        pred = np.where(y == VOID, 0, y)
        pairs.append((f"im{i}", y, pred))
    rep = evaluate(pairs, CAT3)
    assert rep.mean_iou == 1.0 and rep.errors.mae_pct == 0.0 and rep.errors.ee_pct == (0.0, 0.0)
    d = rep.to_json_dict()
    assert set(d) >= {"per_class_iou", "mean_iou", "greenery_iou", "per_image_gvi", "aggregate_gvi",
                      "mae_pct", "pcc", "ee_pct", "void_skipped"}
    assert d["per_image_gvi"]["im0"]["pred"] == d["per_image_gvi"]["im0"]["gt"]


def test_report_six_significant_digits():
    gt = np.array([[0, 1, 1]])
    pred = np.array([[1, 1, 0]])
    d = evaluate([("a", gt, pred)], CAT3).to_json_dict()
    assert d["per_class_iou"]["tree"] == 0.333333
    assert d["per_class_iou"]["grass"] is None
