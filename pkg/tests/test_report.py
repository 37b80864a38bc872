from __future__ import annotations

import csv
import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from helpers import multi_scene_manifest, strip_timestamp
from segdiag.charts import CHARTS, MissingSectionError, emit_svg, render_svg
from segdiag.ingest import load_manifest, save_label_png
from segdiag.report import (
    ANALYSES,
    ConfigError,
    DataError,
    RunConfig,
    report_json,
    run,
    write_report,
)
from segdiag.tables import COLUMNS, UnknownSectionError, emit_csv, section_rows


@pytest.fixture(scope="module")
def manifest(tmp_path_factory):
    return multi_scene_manifest(tmp_path_factory.mktemp("scenes"), seeds=(0, 1))


@pytest.fixture(scope="module")
def report(manifest):
    return run(manifest, RunConfig())


def test_every_section_populated(report):
    for name in ANALYSES:
        assert report.get(name), name
    meta = report["metadata"]
    assert meta["num_images"] == meta["num_analysed"] == 2
    assert meta["failures"] == []
    assert len(meta["taxonomy_sha256"]) == 64


def test_totals_recomputable_from_rows(report):
    m = report["metrics"]
    per = m["per_class"]
    present = [e for e in per.values() if e["count"] > 0]
    assert m["mean_iou"] == pytest.approx(sum(e["iou"] for e in present) / len(present), abs=1e-12)
    assert m["mean_class_acc"] == pytest.approx(sum(e["accuracy"] for e in present) / len(present), abs=1e-12)
    assert m["count"] == sum(e["count"] for e in per.values())
    correct = sum(n for g, p, n in m["confusion"] if g == p)
    assert m["total_pixel_acc"] == correct / m["count"]
    for cid, e in report["error_breakdown"].items():
        assert e["count"] == sum(e["counts"].values())


def test_sections_agree_with_each_other(report):
    assert report["topn"]["1"]["per_class"] == report["metrics"]["per_class"]
    base = report["mislocalisation_gain"]["baseline"]
    assert base["per_class"] == report["metrics"]["per_class"]
    accs = [report["topn"][n]["total_pixel_acc"] for n in sorted(report["topn"], key=int)]
    assert accs == sorted(accs)


def test_byte_identical_and_jobs_independent(manifest, report):
    again = run(manifest, RunConfig())
    parallel = run(manifest, RunConfig(jobs=2))
    a = strip_timestamp(report_json(report))
    assert a == strip_timestamp(report_json(again))
    assert a == strip_timestamp(report_json(parallel))


def test_scores_missing_is_config_error(tmp_path):
    from segdiag.synth import ScoreModel, generate, random_scene_spec, write_scene
    import dataclasses

    spec = dataclasses.replace(random_scene_spec(0), score_model=ScoreModel(0.9, 0.0))
    m = write_scene(generate(spec), tmp_path)
    with pytest.raises(ConfigError):
        run(m, RunConfig(analyses=("metrics", "uncertainty")))
    auto = run(m, RunConfig())
    assert "uncertainty" not in auto and "metrics" in auto


@pytest.mark.parametrize(
    "cfg",
    [
        RunConfig(analyses=("nonsense",)),
        RunConfig(misloc_radii=(5, 1)),
        RunConfig(topn=99),
        RunConfig(distance_edges=(0, 2, 1)),
        RunConfig(measures=("variance",)),
        RunConfig(jobs=0),
    ],
)
def test_inconsistent_config(manifest, cfg):
    with pytest.raises(ConfigError):
        run(manifest, cfg)


def test_config_round_trip(tmp_path):
    cfg = RunConfig(analyses=("metrics",), misloc_radii=(1, 2), topn=3, exclude_bg_gt=True)
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
    assert RunConfig.from_file(tmp_path / "c.json") == cfg
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"bogus": 1})


def test_failures_collected(tmp_path):
    m = multi_scene_manifest(tmp_path, seeds=(0, 1))
    # corrupt one ground truth so it no longer matches the scores
    save_label_png(tmp_path / "scene1_gt.png", np.zeros((5, 5), np.uint8))
    rep = run(m, RunConfig())
    assert rep["metadata"]["num_analysed"] == 1
    assert [f["image_id"] for f in rep["metadata"]["failures"]] == ["scene1"]
    save_label_png(tmp_path / "scene0_gt.png", np.zeros((5, 5), np.uint8))
    with pytest.raises(DataError):
        run(m, RunConfig())


def test_exclude_background_flag(manifest):
    rep = run(manifest, RunConfig(analyses=("metrics",), exclude_bg_gt=True))
    assert "0" not in rep["metrics"]["per_class"] or rep["metrics"]["per_class"]["0"]["count"] == 0


def test_json_has_no_nan(report):
    text = report_json(report)
    assert "NaN" not in text and "Infinity" not in text


class TestCsv:
    def test_sensitivity_shape(self, report, tmp_path):
        paths = emit_csv(report, "sensitivity", tmp_path)
        assert sorted(p.name for p in paths) == ["sensitivity_aspect.csv", "sensitivity_size.csv"]
        with open(tmp_path / "sensitivity_size.csv") as f:
            rows = list(csv.DictReader(f))
        assert tuple(rows[0]) == COLUMNS
        assert len(rows) == len(report["sensitivity"]["size"]) * 5

    def test_values_match_json(self, report, tmp_path):
        emit_csv(report, "metrics", tmp_path)
        with open(tmp_path / "metrics.csv") as f:
            rows = list(csv.DictReader(f))
        for r in rows:
            if r["class_id"]:
                want = report["metrics"]["per_class"][r["class_id"]][r["metric"]]
                assert (float(r["value"]) if r["value"] else None) == want
        total = [r for r in rows if r["metric"] == "mean_iou"][0]
        assert float(total["value"]) == report["metrics"]["mean_iou"]

    def test_empty_section_header_only(self, report, tmp_path):
        rep = dict(report)
        rep.pop("fgbg")
        (path,) = emit_csv(rep, "fgbg", tmp_path)
        assert path.read_text().strip() == ",".join(COLUMNS)

    def test_unknown_section(self, report, tmp_path):
        with pytest.raises(UnknownSectionError):
            emit_csv(report, "weather", tmp_path)


class TestSvg:
    def test_all_well_formed(self, report, tmp_path):
        write_report(report, tmp_path)
        svgs = list((tmp_path / "charts").glob("*.svg"))
        assert len(svgs) >= len(CHARTS)
        for p in svgs:
            root = ET.parse(p).getroot()
            assert root.tag.endswith("svg")

    def test_sensitivity_layout(self, report):
        root = ET.fromstring(render_svg(report, "sensitivity_size"))
        ns = "{http://www.w3.org/2000/svg}"
        bars = [e for e in root.iter(f"{ns}rect") if e.get("class") == "bar"]
        means = [e for e in root.iter(f"{ns}line") if e.get("class") == "class-mean"]
        assert means and all(m.get("stroke-dasharray") for m in means)
        for b in bars:
            s = report["sensitivity"]["size"][b.get("data-class")]["bins"][b.get("data-bin")]
            assert float(b.get("data-value")) == s["mean"]
            assert int(b.get("data-count")) == s["count"]
        for m in means:
            assert float(m.get("data-value")) == report["sensitivity"]["size"][m.get("data-class")]["overall"]["mean"]

    def test_error_breakdown_stacks_to_one(self, report):
        root = ET.fromstring(render_svg(report, "error_breakdown"))
        total = {}
        for e in root.iter("{http://www.w3.org/2000/svg}rect"):
            if e.get("class") == "segment":
                total[e.get("data-class")] = total.get(e.get("data-class"), 0) + float(e.get("data-value"))
        assert total and all(v == pytest.approx(1.0) for v in total.values())

    def test_box_plot_quartiles(self, report):
        root = ET.fromstring(render_svg(report, "uncertainty_by_distance"))
        boxes = [e for e in root.iter("{http://www.w3.org/2000/svg}rect") if e.get("class") == "box"]
        medians = [e for e in root.iter("{http://www.w3.org/2000/svg}line") if e.get("class") == "median"]
        assert len(boxes) == len(medians) > 0
        for b in boxes:
            assert float(b.get("data-p25")) <= float(b.get("data-p75"))

    def test_missing_section(self, report, tmp_path):
        rep = {k: v for k, v in report.items() if k != "error_breakdown"}
        with pytest.raises(MissingSectionError):
            emit_svg(rep, "error_breakdown", tmp_path)
