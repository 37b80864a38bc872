from __future__ import annotations

import math

import numpy as np
import pytest

import oracles
from conftest import make_taxonomy
from segdiag.core import ConfusionMatrix, accumulate_confusion, extract_instances
from segdiag.metrics import (
    class_metrics,
    iou,
    merge_confusion,
    merged_group_metrics,
    per_instance_accuracy,
    pixel_accuracy,
    topn_metrics,
    topn_prediction,
)


@pytest.fixture
def ab():
    return make_taxonomy(2, background=False)


def one_by_eight(t):
    gt = np.array([[0, 0, 0, 0, 1, 1, 1, 1]])
    pred = np.array([[0, 0, 0, 1, 0, 0, 1, 1]])
    return accumulate_confusion(gt, pred, t)


def test_accuracy_hand_example(ab):
    acc, total = pixel_accuracy(one_by_eight(ab))
    assert acc == {0: 3 / 4, 1: 2 / 4}
    assert total == 5 / 8


def test_iou_hand_example(ab):
    per, mean = iou(one_by_eight(ab))
    assert per == {0: 0.5, 1: 0.4}
    assert mean == pytest.approx(0.45, abs=1e-15)


def test_perfect_and_disjoint(tax):
    gt = np.array([[1, 2, 3]])
    m = class_metrics(accumulate_confusion(gt, gt, tax))
    assert all(v == 1.0 for v in m.accuracy.values())
    m = class_metrics(accumulate_confusion(gt, np.array([[2, 3, 1]]), tax))
    assert m.iou[1] == 0.0


def test_class_absent_from_gt_excluded_from_means(tax):
    gt = np.array([[1, 1]])
    pred = np.array([[1, 2]])
    m = class_metrics(accumulate_confusion(gt, pred, tax))
    assert 2 not in m.accuracy
    assert m.iou[2] == 0.0  # predicted but never present
    assert m.mean_iou == 0.5  # mean over classes present in GT only
    assert m.mean_class_acc == 0.5
    d = m.to_dict()
    assert d["count"] == 2 and d["per_class"]["1"]["count"] == 2


def test_all_ignore_gives_zero_matrix(tax):
    cm = accumulate_confusion(np.full((2, 2), 255), np.zeros((2, 2), int), tax)
    assert cm.total == 0
    m = class_metrics(cm)
    assert m.accuracy == {} and math.isnan(m.total_pixel_acc)


def test_metrics_match_oracle(tax, rng):
    for _ in range(50):
        gt = rng.choice([0, 1, 2, 3, 4, 255], size=(6, 7))
        pred = rng.integers(0, 5, (6, 7))
        m = class_metrics(accumulate_confusion(gt, pred, tax))
        conf = oracles.confusion(gt.tolist(), pred.tolist(), tax.class_ids)
        acc, ious = oracles.accuracy_iou(conf, tax.class_ids)
        assert m.accuracy == pytest.approx(acc, abs=1e-12)
        assert m.iou == pytest.approx(ious, abs=1e-12)


class TestInstanceAccuracy:
    def test_three_of_four(self, tax):
        gt = np.array([[3, 3], [3, 3]])
        inst = np.ones((2, 2), int)
        pred = np.array([[3, 3], [3, 0]])
        (rec,) = extract_instances(inst, gt, tax)
        assert per_instance_accuracy(rec, inst, gt, pred) == 0.75
        assert per_instance_accuracy(rec, inst, gt, np.zeros((2, 2), int)) == 0.0

    def test_ignore_pixels_skipped(self, tax):
        gt = np.array([[3, 255]])
        inst = np.array([[1, 1]])
        (rec,) = extract_instances(inst, gt, tax)
        assert per_instance_accuracy(rec, inst, gt, np.array([[3, 0]])) == 1.0

    def test_matches_oracle(self, tax, rng):
        for _ in range(30):
            gt = rng.choice([1, 2, 3, 255], size=(8, 8))
            inst = rng.integers(0, 4, (8, 8))
            pred = rng.integers(0, 5, (8, 8))
            gt[0, 0], inst[0, :] = 1, 1  # every instance keeps a labelled pixel
            gt[1, 0], inst[1, :] = 2, 2
            gt[2, 0], inst[2, :] = 3, 3
            for rec in extract_instances(inst, gt, tax):
                got = per_instance_accuracy(rec, inst, gt, pred)
                want = oracles.instance_accuracy(
                    inst.tolist(), gt.tolist(), pred.tolist(), rec.instance_id, rec.class_id
                )
                assert got == pytest.approx(want, abs=1e-12)


class TestTopN:
    def test_ordering(self):
        t = make_taxonomy(3, background=False)
        scores = np.array([[[0.5, 0.3, 0.2]]])
        gt = np.array([[1]])
        assert topn_prediction(gt, scores, 1, t).tolist() == [[0]]
        assert topn_prediction(gt, scores, 2, t).tolist() == [[1]]

    def test_full_n_is_perfect(self, tax, rng):
        scores = rng.dirichlet(np.ones(5), size=(4, 4))
        gt = rng.choice([0, 1, 2, 3, 4, 255], size=(4, 4))
        assert topn_metrics(gt, scores, 5, tax).total_pixel_acc == 1.0

    def test_top1_is_argmax(self, tax, rng):
        scores = rng.dirichlet(np.ones(5), size=(5, 5))
        gt = rng.integers(0, 5, (5, 5))
        pred = np.argmax(scores, -1)
        assert topn_metrics(gt, scores, 1, tax) == class_metrics(accumulate_confusion(gt, pred, tax))

    def test_matches_oracle(self, tax, rng):
        scores = rng.dirichlet(np.ones(5), size=(6, 6))
        scores[0, 0] = [0.25, 0.25, 0.25, 0.25, 0.0]  # ties at the cut-off
        gt = rng.integers(0, 5, (6, 6))
        gt[0, 0] = 3
        for n in range(1, 6):
            got = topn_prediction(gt, scores, n, tax)
            for y in range(6):
                for x in range(6):
                    want = oracles.topn_label(int(gt[y, x]), scores[y, x].tolist(), list(tax.class_ids), n)
                    assert got[y, x] == want

    def test_bad_n(self, tax):
        with pytest.raises(ValueError):
            topn_prediction(np.zeros((1, 1), int), np.full((1, 1, 5), 0.2), 6, tax)


class TestMerged:
    def test_within_group_swap(self, tax):
        gt = np.array([[1, 1, 1, 3]])
        pred = np.array([[2, 2, 2, 3]])
        mg = merged_group_metrics(accumulate_confusion(gt, pred, tax), tax)
        assert mg.representative[2] == 1
        assert mg.original.accuracy[1] == 0.0
        assert mg.merged.accuracy[1] == 1.0
        assert mg.accuracy_gain[1] == 1.0
        assert mg.accuracy_gain[3] == 0.0

    def test_no_groups_is_identity(self, rng):
        t = make_taxonomy(4)
        gt = rng.integers(0, 4, (5, 5))
        pred = rng.integers(0, 4, (5, 5))
        cm = accumulate_confusion(gt, pred, t)
        mg = merged_group_metrics(cm, t)
        assert merge_confusion(cm, t) == cm
        assert mg.merged == class_metrics(cm)
        assert all(v == 0 for v in mg.accuracy_gain.values())

    def test_merge_preserves_total(self, tax, rng):
        cm = accumulate_confusion(rng.integers(0, 5, (8, 8)), rng.integers(0, 5, (8, 8)), tax)
        merged = merge_confusion(cm, tax)
        assert merged.total == cm.total
        assert merged.class_ids == (0, 1, 3, 4)
