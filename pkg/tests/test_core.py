from __future__ import annotations

import numpy as np
import pytest

import oracles
from conftest import make_taxonomy
from segdiag.core import (
    BackgroundInGroupError,
    ConfusionMatrix,
    DuplicateClassError,
    InstanceRecord,
    LabelError,
    OverlappingGroupsError,
    ShapeMismatchError,
    Taxonomy,
    TaxonomyError,
    UnknownGroupMemberError,
    accumulate_confusion,
    extract_instances,
    validate_taxonomy,
)


class TestTaxonomy:
    def test_duplicate_id(self):
        with pytest.raises(DuplicateClassError):
            validate_taxonomy(Taxonomy(((1, "a"), (1, "b"))))

    def test_unknown_group_member(self):
        with pytest.raises(UnknownGroupMemberError):
            validate_taxonomy(Taxonomy(((1, "a"), (2, "b")), groups={"g": (1, 7)}))

    def test_overlapping_groups(self):
        t = Taxonomy(((1, "a"), (2, "b"), (3, "c")), groups={"g": (1, 2), "h": (2, 3)})
        with pytest.raises(OverlappingGroupsError):
            validate_taxonomy(t)

    def test_background_in_group(self):
        t = Taxonomy(((0, "bg"), (1, "a")), background_id=0, groups={"g": (0, 1)})
        with pytest.raises(BackgroundInGroupError):
            validate_taxonomy(t)

    def test_ignore_collides_with_class(self):
        with pytest.raises(TaxonomyError):
            validate_taxonomy(Taxonomy(((255, "x"),)))

    def test_round_trip_and_digest(self, tax):
        again = Taxonomy.from_dict(tax.to_dict())
        assert again == tax
        assert again.digest() == tax.digest()
        assert tax.group_of(2) == "pair" and tax.group_of(3) is None

    def test_to_indices_unknown_label(self, tax):
        with pytest.raises(LabelError):
            tax.to_indices(np.array([[0, 9]]))
        with pytest.raises(LabelError):
            tax.to_indices(np.array([[0, 255]]), allow_ignore=False)
        assert tax.to_indices(np.array([[4, 255]])).tolist() == [[4, -1]]


class TestConfusion:
    def test_small_example(self):
        t = make_taxonomy(2, background=False)
        gt = np.array([[0, 0, 0, 0, 1, 1, 1, 1]])
        pred = np.array([[0, 0, 0, 1, 1, 1, 0, 0]])
        cm = accumulate_confusion(gt, pred, t)
        assert cm.counts.tolist() == [[3, 1], [2, 2]]
        assert cm.total == 8

    def test_ignore_excluded(self, tax):
        gt = np.array([[255, 1], [2, 255]])
        pred = np.array([[3, 1], [1, 0]])
        cm = accumulate_confusion(gt, pred, tax)
        assert cm.total == 2

    def test_pred_ignore_on_evaluated_pixel(self, tax):
        with pytest.raises(LabelError):
            accumulate_confusion(np.array([[1]]), np.array([[255]]), tax)

    def test_shape_mismatch(self, tax):
        with pytest.raises(ShapeMismatchError):
            accumulate_confusion(np.zeros((2, 2), int), np.zeros((2, 3), int), tax)

    def test_matches_oracle(self, tax, rng):
        for _ in range(30):
            h, w = rng.integers(1, 12, 2)
            gt = rng.choice([0, 1, 2, 3, 4, 255], size=(h, w))
            pred = rng.integers(0, 5, (h, w))
            cm = accumulate_confusion(gt, pred, tax)
            want = oracles.confusion(gt.tolist(), pred.tolist(), tax.class_ids)
            got = {(g, p): n for g, p, n in cm.entries()}
            assert got == want

    def test_exclude_background(self, tax):
        gt = np.array([[0, 0, 1]])
        pred = np.array([[1, 0, 1]])
        cm = accumulate_confusion(gt, pred, tax, exclude_background=True)
        assert cm.entries() == [[1, 1, 1]]

    def test_monoid(self, tax, rng):
        parts = []
        for _ in range(3):
            gt = rng.integers(0, 5, (4, 4))
            pred = rng.integers(0, 5, (4, 4))
            parts.append(accumulate_confusion(gt, pred, tax))
        zero = ConfusionMatrix.zeros(tax.class_ids)
        assert (parts[0] + parts[1]) + parts[2] == parts[0] + (parts[1] + parts[2])
        assert parts[0] + zero == parts[0]
        assert parts[0] + parts[1] == parts[1] + parts[0]


class TestInstances:
    def test_rectangle(self, tax):
        gt = np.zeros((10, 12), int)
        inst = np.zeros((10, 12), int)
        gt[2:5, 3:9] = 3
        inst[2:5, 3:9] = 7
        (rec,) = extract_instances(inst, gt, tax, "img")
        assert rec.instance_id == 7 and rec.class_id == 3
        assert rec.pixel_count == 18
        assert rec.bbox == (2, 3, 4, 8)
        assert rec.aspect_ratio == 6 / 3
        assert rec.image_id == "img"

    def test_majority_vote_tie_prefers_smaller_id(self, tax):
        gt = np.array([[2, 1, 255]])
        inst = np.array([[5, 5, 5]])
        (rec,) = extract_instances(inst, gt, tax)
        assert rec.class_id == 1
        assert rec.pixel_count == 3  # ignore pixels still belong to the mask

    def test_override(self, tax):
        gt = np.array([[2, 2]])
        inst = np.array([[5, 5]])
        (rec,) = extract_instances(inst, gt, tax, class_overrides={5: 4})
        assert rec.class_id == 4

    def test_all_ignore(self, tax):
        with pytest.raises(LabelError):
            extract_instances(np.array([[1]]), np.array([[255]]), tax)

    def test_empty(self, tax):
        assert extract_instances(np.zeros((3, 3), int), np.zeros((3, 3), int), tax) == []

    def test_record_round_trip(self):
        r = InstanceRecord(3, 2, 10, (0, 1, 4, 2), 0.4, "x", "S", "T")
        assert InstanceRecord.from_dict(r.to_dict()) == r
        assert r.bbox_height == 5 and r.bbox_width == 2
