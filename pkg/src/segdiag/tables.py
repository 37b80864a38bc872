"""CSV projections of report sections.

Every table has the same long format::

    class_id, class_name, key, metric, count, value, stderr

``key`` carries the bin / radius / N / category the row belongs to. Floats
are written with ``repr`` so they round-trip to the JSON values exactly.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, Iterable, List

from .core import ASPECT_BINS, SIZE_BINS

__all__ = ["COLUMNS", "SECTIONS", "UnknownSectionError", "section_rows", "emit_csv", "emit_all_csv"]

COLUMNS = ("class_id", "class_name", "key", "metric", "count", "value", "stderr")


class UnknownSectionError(KeyError):
    pass


def _row(names, cid="", key="", metric="", count="", value=None, stderr=None) -> dict:
    return {
        "class_id": cid,
        "class_name": names.get(str(cid), "") if cid != "" else "",
        "key": key,
        "metric": metric,
        "count": count,
        "value": "" if value is None else value,
        "stderr": "" if stderr is None else stderr,
    }


def _metric_rows(names, m: dict, key="") -> List[dict]:
    rows = []
    for cid, e in m["per_class"].items():
        for metric in ("accuracy", "iou"):
            rows.append(_row(names, cid, key, metric, e["count"], e[metric]))
    for metric in ("total_pixel_acc", "mean_class_acc", "mean_iou"):
        rows.append(_row(names, "", key or "total", metric, m["count"], m[metric]))
    return rows


def _stat_rows(names, table: dict, bins, metric) -> List[dict]:
    rows = []
    for cid, entry in table.items():
        for b in bins:
            s = entry["bins"][b]
            rows.append(_row(names, cid, b, metric, s["count"], s["mean"], s["stderr"]))
    return rows


def _metrics(report, names):
    return {"metrics": _metric_rows(names, report["metrics"])}


def _topn(report, names):
    rows = []
    for n, m in report["topn"].items():
        rows += _metric_rows(names, m, key=f"top{n}")
    return {"topn": rows}


def _merged(report, names):
    sec = report["merged_groups"]
    rows = []
    for cid, g in sec["gains"].items():
        for metric in ("accuracy", "merged_accuracy", "accuracy_gain", "iou", "merged_iou", "iou_gain"):
            rows.append(_row(names, cid, "gain", metric, g["count"], g[metric]))
    rows += _metric_rows(names, sec["merged"], key="merged")
    return {"merged_groups": rows}


def _sensitivity(report, names):
    sec = report["sensitivity"]
    return {
        "sensitivity_size": _stat_rows(names, sec["size"], SIZE_BINS, "instance_accuracy"),
        "sensitivity_aspect": _stat_rows(names, sec["aspect"], ASPECT_BINS, "instance_accuracy"),
    }


def _distribution(report, names):
    rows = []
    for cid, d in report["category_distribution"].items():
        for i, sb in enumerate(d["size_bins"]):
            for j, ab in enumerate(d["aspect_bins"]):
                n = d["counts"][i][j]
                rows.append(_row(names, cid, f"{sb}/{ab}", "instances", n, n))
    return {"category_distribution": rows}


def _breakdown(report, names):
    rows = []
    for cid, e in report["error_breakdown"].items():
        for cat, n in e["counts"].items():
            p = e["proportions"][cat] if e["proportions"] else None
            rows.append(_row(names, cid, cat, "proportion", n, p))
    return {"error_breakdown": rows}


def _misloc(report, names):
    sec = report["mislocalisation_gain"]
    rows = []
    if sec:
        rows += _metric_rows(names, sec["baseline"], key="r0_baseline")
        for r, e in sec["radii"].items():
            rows += _metric_rows(names, e["metrics"], key=f"r{r}")
    return {"mislocalisation_gain": rows}


def _uncertainty(report, names):
    dist, cat, err = [], [], []
    for measure, sec in report["uncertainty"].items():
        for b in sec["by_distance"]:
            hi = "inf" if b["hi"] is None else b["hi"]
            key = f"{measure}:[{b['lo']},{hi})"
            for q in ("p25", "median", "p75"):
                dist.append(_row(names, "", key, q, b["count"], b[q]))
        for attr, bins in (("size", SIZE_BINS), ("aspect", ASPECT_BINS)):
            table = (sec.get("by_category") or {}).get(attr, {})
            for row in _stat_rows(names, table, bins, f"{measure}:{attr}"):
                cat.append(row)
        for etype, e in (sec["by_error_type"] or {}).items():
            err.append(_row(names, "", etype, measure, e["count"], e["mean"]))
    return {
        "uncertainty_by_distance": dist,
        "uncertainty_by_category": cat,
        "uncertainty_by_error_type": err,
    }


def _fgbg(report, names):
    rows = []
    for measure, e in report["fgbg"].items():
        for metric in ("precision", "recall", "accuracy"):
            rows.append(_row(names, "", measure, metric, e["count"], e[metric]))
    return {"fgbg": rows}


def _refinement(report, names):
    rows = []
    for method, entries in report["refinement"]["methods"].items():
        for e in entries:
            cid = str(e["class_id"])
            for b in ("XS", "S"):
                rows.append(_row(names, cid, method, f"{b}_instance_acc", e[f"{b}_count"], e[f"{b}_instance_acc"]))
            rows.append(_row(names, cid, method, "iou", e["images"], e["iou"]))
            rows.append(_row(names, cid, method, "accuracy", e["images"], e["accuracy"]))
    return {"refinement": rows}


SECTIONS = {
    "metrics": _metrics,
    "topn": _topn,
    "merged_groups": _merged,
    "sensitivity": _sensitivity,
    "category_distribution": _distribution,
    "error_breakdown": _breakdown,
    "mislocalisation_gain": _misloc,
    "uncertainty": _uncertainty,
    "fgbg": _fgbg,
    "refinement": _refinement,
}


def section_rows(report: dict, section: str) -> Dict[str, List[dict]]:
    """Table name -> rows for one report section."""
    if section not in SECTIONS:
        raise UnknownSectionError(section)
    names = report.get("metadata", {}).get("classes", {})
    if report.get(section) is None:
        # section disabled or empty: header-only tables
        return {name: [] for name in SECTIONS[section](_empty_stub(section), names)}
    return SECTIONS[section](report, names)


def _empty_stub(section: str) -> dict:
    stubs = {
        "metrics": {"metrics": {"per_class": {}, "total_pixel_acc": None, "mean_class_acc": None, "mean_iou": None, "count": 0}},
        "topn": {"topn": {}},
        "merged_groups": {"merged_groups": {"gains": {}, "merged": {"per_class": {}, "total_pixel_acc": None, "mean_class_acc": None, "mean_iou": None, "count": 0}}},
        "sensitivity": {"sensitivity": {"size": {}, "aspect": {}}},
        "category_distribution": {"category_distribution": {}},
        "error_breakdown": {"error_breakdown": {}},
        "mislocalisation_gain": {"mislocalisation_gain": None},
        "uncertainty": {"uncertainty": {}},
        "fgbg": {"fgbg": {}},
        "refinement": {"refinement": {"methods": {}}},
    }
    return stubs[section]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def emit_csv(report: dict, section: str, out_dir) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, rows in section_rows(report, section).items():
        path = out / f"{name}.csv"
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=COLUMNS, quoting=csv.QUOTE_MINIMAL)
            w.writeheader()
            for row in rows:
                w.writerow({k: _fmt(v) for k, v in row.items()})
        paths.append(path)
    return paths


def emit_all_csv(report: dict, out_dir) -> List[Path]:
    paths = []
    for section in SECTIONS:
        if section in report:
            paths += emit_csv(report, section, out_dir)
    return paths
