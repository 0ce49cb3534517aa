from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

import ovfusion as ov
from ovfusion.aggregate import PointFeatureField
from ovfusion.semantics import classify_points, evaluate, evaluate_split, hiou, query_similarity

from conftest import eye_text, make_text
from oracles import brute_classify, brute_evaluate


def _field(features, valid=None):
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    valid = np.ones(n, dtype=bool) if valid is None else np.asarray(valid)
    labels = np.full(n, -1, dtype=np.int64)
    return PointFeatureField(features=features, valid=valid, labels=labels)


def test_classify_identity_on_prototypes():
    text = eye_text(5, 5)
    field = _field(text.rows)
    assert classify_points(field, text).tolist() == [0, 1, 2, 3, 4]


def test_classify_invalid_to_ignore():
    text = eye_text(3, 3)
    field = _field(np.zeros((4, 3)), valid=np.zeros(4, dtype=bool))
    assert (classify_points(field, text) == -1).all()


def test_classify_matches_brute_force():
    rng = np.random.default_rng(1)
    text = make_text(rng.standard_normal((8, 12)))
    feats = rng.standard_normal((100, 12))
    got = classify_points(_field(feats), text)
    for i in range(100):
        assert got[i] == brute_classify(feats[i], text.rows)


def test_classify_scale_invariance():
    rng = np.random.default_rng(2)
    text = make_text(rng.standard_normal((6, 10)))
    feats = rng.standard_normal((50, 10))
    base = classify_points(_field(feats), text)
    for lam in (1e-6, 0.5, 3.0, 1e6):
        assert np.array_equal(classify_points(_field(feats * lam), text), base)


def test_query_similarity_construction(tiny_bundle):
    field = ov.run_pipeline(tiny_bundle)
    present = np.unique(tiny_bundle.gt)
    k = int(present[0])
    sims = query_similarity(field, tiny_bundle.text.rows[k])
    members = (tiny_bundle.gt == k) & field.valid
    others = (tiny_bundle.gt != k) & field.valid
    assert sims[members].min() > sims[others].max()


def test_query_self_feature_is_one():
    rng = np.random.default_rng(3)
    feats = rng.standard_normal((5, 8))
    sims = query_similarity(_field(feats), feats[2])
    assert sims[2] == pytest.approx(1.0, abs=1e-12)


def test_query_orthogonal_all_zero():
    feats = np.eye(3, 6)[:3]
    sims = query_similarity(_field(feats), np.eye(6)[5])
    assert np.allclose(sims, 0.0)


def test_query_invalid_nan_and_zero_norm_error():
    feats = np.eye(2, 4)
    field = _field(feats, valid=np.array([True, False]))
    sims = query_similarity(field, np.eye(4)[0])
    assert np.isnan(sims[1]) and not np.isnan(sims[0])
    with pytest.raises(ValueError):
        query_similarity(field, np.zeros(4))


def test_evaluate_perfect():
    pred = np.array([0, 1, 2, 1])
    report = evaluate(pred, pred, 3)
    assert report.acc == 1.0 and report.miou == 1.0


def test_evaluate_hand_case():
    report = evaluate(np.array([0, 1, 1]), np.array([0, 1, 0]), 2)
    assert report.acc == pytest.approx(2 / 3)
    assert report.per_class_iou.tolist() == [0.5, 0.5]
    assert report.miou == pytest.approx(0.5)


def test_evaluate_all_rejected():
    report = evaluate(np.full(5, -1), np.array([0, 0, 1, 1, 1]), 3)
    assert report.acc == 0.0
    assert report.miou == 0.0
    assert np.isnan(report.per_class_iou[2])  # absent from gt and pred
    assert report.confusion[:, 3].tolist() == [2, 3, 0]


def test_evaluate_ignores_gt_ignore():
    report = evaluate(np.array([0, 1]), np.array([-1, 1]), 2)
    assert report.confusion.sum() == 1
    assert report.acc == 1.0


def test_evaluate_length_mismatch():
    with pytest.raises(ValueError):
        evaluate(np.array([0]), np.array([0, 1]), 2)


def test_evaluate_matches_brute_force_random():
    rng = np.random.default_rng(9)
    for _ in range(300):
        c = int(rng.integers(1, 6))
        n = int(rng.integers(1, 13))
        pred = rng.integers(-1, c, size=n)
        gt = rng.integers(-1, c, size=n)
        report = evaluate(pred, gt, c)
        confusion, acc, ious, miou = brute_evaluate(pred.tolist(), gt.tolist(), c)
        assert report.confusion.tolist() == confusion
        assert report.acc == pytest.approx(acc)
        assert report.miou == pytest.approx(miou)
        for got, want in zip(report.per_class_iou, ious):
            if want is None:
                assert np.isnan(got)
            else:
                assert got == pytest.approx(want)


def test_evaluate_permutation_invariant():
    rng = np.random.default_rng(10)
    pred = rng.integers(-1, 4, size=60)
    gt = rng.integers(-1, 4, size=60)
    perm = rng.permutation(60)
    a = evaluate(pred, gt, 4)
    b = evaluate(pred[perm], gt[perm], 4)
    assert np.array_equal(a.confusion, b.confusion)


def test_hiou_reported_rows():
    # published seen/unseen pairs and their harmonic means
    assert round(hiou(67.3, 50.8), 1) == pytest.approx(57.9, abs=0.05)
    assert round(hiou(68.3, 53.2), 1) == pytest.approx(59.8, abs=0.05)
    assert round(hiou(67.7, 40.7), 1) == pytest.approx(50.8, abs=0.05)


def test_hiou_of_equals():
    for x in (0.25, 42.0):
        assert hiou(x, x) == pytest.approx(x)


def test_hiou_errors():
    with pytest.raises(ValueError):
        hiou(0.0, 0.0)
    with pytest.raises(ValueError):
        hiou(-1.0, 2.0)


@given(
    st.floats(min_value=0.0, max_value=100.0),
    st.floats(min_value=0.0, max_value=100.0),
)
def test_hiou_at_most_arithmetic_mean(a, b):
    if a == 0 and b == 0:
        return
    h = hiou(a, b)
    mean = (a + b) / 2.0
    assert h <= mean + 1e-9
    if abs(a - b) > 1e-6:
        assert h < mean


def test_evaluate_split_basic():
    pred = np.array([0, 1, 2, 2, 3])
    gt = np.array([0, 1, 2, 3, 3])
    report = evaluate_split(pred, gt, 4, unseen=[2, 3])
    assert report.split["seen"] == [0, 1]
    assert report.split["unseen"] == [2, 3]
    assert report.split["miou_seen"] == pytest.approx(1.0)
    mu = report.split["miou_unseen"]
    assert mu == pytest.approx((0.5 + 0.5) / 2)
    assert report.split["hiou"] == pytest.approx(hiou(1.0, mu))


def test_evaluate_split_bad_index():
    with pytest.raises(ValueError):
        evaluate_split(np.array([0]), np.array([0]), 2, unseen=[5])


def test_report_json_names():
    report = evaluate_split(np.array([0, 1]), np.array([0, 1]), 2, unseen=[1])
    payload = report.to_json_dict(["chair", "bed"])
    assert payload["per_class_iou"] == {"chair": 1.0, "bed": 1.0}
    assert payload["split"]["unseen"] == ["bed"]
    assert "mean_class_acc" in payload
