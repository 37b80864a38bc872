from __future__ import annotations

import math

import numpy as np
import pytest

import oracles
from segdiag.core import extract_instances
from segdiag.characteristics import assign_bins, fit_bins
from segdiag.ingest import read_scr1
from segdiag.uncertainty import (
    DistanceSamples,
    FgBgCounts,
    boundary_distance_map,
    boundary_mask,
    box_stats,
    distance_samples,
    dump_map,
    fgbg_from_uncertainty,
    instance_mean_uncertainty,
    relative_entropy,
    relative_probability,
    uncertainty_by_category,
    uncertainty_by_distance,
    uncertainty_by_error_type,
    uncertainty_map,
)


class TestMeasures:
    def test_entropy_examples(self):
        assert relative_entropy(np.full(21, 1 / 21)) == pytest.approx(1.0, abs=1e-12)
        assert relative_entropy(np.eye(4)[2]) == 0.0
        assert relative_entropy(np.array([0.75, 0.25])) == pytest.approx(0.8113, abs=1e-4)

    def test_probability_examples(self):
        assert relative_probability(np.eye(3)[0]) == 0.0
        assert relative_probability(np.array([0.4, 0.4, 0.2])) == 1.0
        assert relative_probability(np.array([0.6, 0.3, 0.1])) == pytest.approx(0.5, abs=1e-15)

    def test_match_scalar_oracle(self, rng):
        p = rng.dirichlet(np.ones(6), size=(5, 4))
        re = uncertainty_map(p, "relative_entropy")
        rp = uncertainty_map(p, "relative_probability")
        for y in range(5):
            for x in range(4):
                assert re[y, x] == pytest.approx(oracles.relative_entropy(p[y, x].tolist()), abs=1e-12)
                assert rp[y, x] == pytest.approx(oracles.relative_probability(p[y, x].tolist()), abs=1e-12)

    def test_maps_extremes(self):
        assert np.all(uncertainty_map(np.full((2, 3, 4), 0.25), "relative_entropy") == pytest.approx(1.0))
        onehot = np.zeros((2, 2, 3))
        onehot[..., 1] = 1
        assert not uncertainty_map(onehot, "relative_entropy").any()
        assert not uncertainty_map(onehot, "relative_probability").any()

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            relative_entropy(np.array([0.5, 0.6]))
        with pytest.raises(ValueError):
            uncertainty_map(np.full((1, 1, 2), 0.5), "variance")


class TestDistance:
    def test_centre_pixel(self):
        gt = np.zeros((5, 5), int)
        gt[2, 2] = 1
        d = boundary_distance_map(gt)
        assert d[0, 0] == pytest.approx(math.sqrt(5), abs=1e-12)
        assert d[2, 2] == 0 and d[1, 2] == 0

    def test_uniform_map(self):
        assert np.isinf(boundary_distance_map(np.ones((3, 4), int))).all()

    def test_ignore_is_its_own_label(self):
        gt = np.array([[1, 1, 255, 1]])
        assert boundary_mask(gt).tolist() == [[False, True, True, True]]

    def test_matches_all_pairs(self, rng):
        for _ in range(20):
            h, w = rng.integers(1, 12, 2)
            gt = rng.choice([0, 1, 255], size=(h, w), p=[0.7, 0.25, 0.05])
            got = boundary_distance_map(gt)
            want = np.array(oracles.boundary_distance(gt.tolist()))
            assert np.array_equal(got, want)


class TestByDistance:
    def test_constant(self):
        u = np.full((6, 6), 0.3)
        gt = np.zeros((6, 6), int)
        gt[:, 3:] = 1
        for b in uncertainty_by_distance(u, boundary_distance_map(gt)):
            assert b["p25"] == b["median"] == b["p75"] == 0.3

    def test_midpoint_convention(self):
        assert box_stats(np.array([0.2, 0.4]))["median"] == pytest.approx(0.3)

    def test_half_open_bins_and_inf(self):
        u = np.array([[0.1, 0.2, 0.3, 0.4]])
        d = np.array([[0.0, 1.0, 1.5, np.inf]])
        stats = uncertainty_by_distance(u, d, (0, 1, 2, math.inf))
        assert [(b["lo"], b["count"]) for b in stats] == [(0.0, 1), (1.0, 2)]

    def test_matches_sort(self, rng):
        u = rng.random((10, 10))
        d = rng.integers(0, 8, (10, 10)).astype(float)
        edges = (0, 2, 4, 8)
        got = uncertainty_by_distance(u, d, edges)
        for b in got:
            vals = sorted(u[(d >= b["lo"]) & (d < b["hi"])].tolist())
            assert b["count"] == len(vals)
            assert b["median"] == pytest.approx(float(np.median(vals)), abs=1e-12)

    def test_samples_merge(self, rng):
        u1, u2 = rng.random((4, 4)), rng.random((4, 4))
        d = rng.integers(0, 4, (4, 4)).astype(float)
        a = distance_samples(u1, d, (0, 2, 4))
        b = distance_samples(u2, d, (0, 2, 4))
        both = distance_samples(np.concatenate([u1, u2]), np.concatenate([d, d]), (0, 2, 4))
        assert (a + b).stats() == both.stats()


class TestByCategory:
    def test_single_uniform_instance(self, tax):
        gt = np.zeros((4, 4), int)
        inst = np.zeros((4, 4), int)
        gt[1:3, 1:3] = 3
        inst[1:3, 1:3] = 1
        (rec,) = extract_instances(inst, gt, tax)
        assert instance_mean_uncertainty(rec, np.ones((4, 4)), inst) == 1.0

    def test_two_instances_same_bin(self, tax):
        gt = np.zeros((3, 7), int)
        inst = np.zeros((3, 7), int)
        gt[1, 1:3] = 3
        inst[1, 1:3] = 1
        gt[1, 4:6] = 3
        inst[1, 4:6] = 2
        u = np.zeros((3, 7))
        u[1, 1:3] = 0.2
        u[1, 4:6] = 0.6
        recs = extract_instances(inst, gt, tax)
        scheme = fit_bins(recs)
        recs = [assign_bins(r, scheme) for r in recs]
        out = uncertainty_by_category(recs, u, inst)
        assert out["size"][3]["bins"]["XS"].mean == pytest.approx(0.4)


class TestByErrorType:
    def test_no_errors(self, tax):
        gt = np.array([[0, 3, 3]])
        inst = np.array([[0, 1, 1]])
        s = uncertainty_by_error_type(gt, gt, np.array([[0.1, 0.2, 0.4]]), tax, 5, inst)
        assert s.means() == {"instance": pytest.approx(0.3)}

    def test_all_background_errors(self, tax):
        gt = np.array([[3, 3, 0]])
        pred = np.array([[0, 0, 0]])
        u = np.array([[0.2, 0.6, 0.9]])
        m = uncertainty_by_error_type(gt, pred, u, tax, 1).means()
        assert m["background"] == pytest.approx(0.4)
        assert "similar" not in m and "dissimilar" not in m
        assert m["misloc"] == pytest.approx(0.6)  # only the pixel next to background

    def test_matches_pixel_oracle(self, tax, rng):
        for _ in range(10):
            gt = rng.choice([0, 1, 2, 3, 4, 255], size=(8, 8))
            pred = rng.integers(0, 5, (8, 8))
            u = rng.random((8, 8))
            got = uncertainty_by_error_type(gt, pred, u, tax, 2)
            sums = {k: [0.0, 0] for k in ("instance", "misloc", "background", "similar", "dissimilar")}
            for y in range(8):
                for x in range(8):
                    g, p = int(gt[y, x]), int(pred[y, x])
                    if g == 255:
                        continue
                    if g != 0:
                        sums["instance"][0] += u[y, x]
                        sums["instance"][1] += 1
                    cat = oracles.error_category(g, p, 0, tax.groups)
                    if cat:
                        sums[cat][0] += u[y, x]
                        sums[cat][1] += 1
                        if oracles.in_window(gt.tolist(), y, x, p, 2):
                            sums["misloc"][0] += u[y, x]
                            sums["misloc"][1] += 1
            d = got.to_dict()
            for k, (s, n) in sums.items():
                assert d[k]["count"] == n
                if n:
                    assert d[k]["mean"] == pytest.approx(s / n, abs=1e-12)


class TestFgBg:
    def test_perfect_separation(self, tax):
        gt = np.array([[0, 0, 3, 255], [0, 1, 1, 0]])
        u = np.where(gt == 0, 0.1, 0.9)
        c = fgbg_from_uncertainty(u, gt, tax)
        assert c.precision == 1.0 and c.recall == 1.0
        assert c.total == 7

    def test_constant_map(self, tax):
        gt = np.array([[0, 3]])
        c = fgbg_from_uncertainty(np.full((1, 2), 0.5), gt, tax)
        assert c.recall == 0.0 and c.precision is None

    def test_all_ignore(self, tax):
        with pytest.raises(ValueError):
            fgbg_from_uncertainty(np.zeros((1, 2)), np.full((1, 2), 255), tax)

    def test_counts_conserved(self, tax, rng):
        gt = rng.choice([0, 3, 255], size=(9, 9))
        c = fgbg_from_uncertainty(rng.random((9, 9)), gt, tax)
        assert c.total == int((gt != 255).sum())
        assert (c + FgBgCounts()).to_dict() == c.to_dict()


def test_dump_map(tmp_path, rng):
    m = rng.random((3, 4))
    dump_map(tmp_path / "u.scr1", m)
    back, _ = read_scr1(tmp_path / "u.scr1")
    assert back.shape == (3, 4, 1)
    assert np.array_equal(back[..., 0], m.astype(np.float32))
