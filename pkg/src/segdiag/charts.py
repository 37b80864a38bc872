"""Static SVG charts drawn straight from report sections.

Each data mark carries ``data-*`` attributes (value, count, class, bin...)
so tests and downstream tools can read the numbers back from the SVG.
"""
from __future__ import annotations

import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .core import ASPECT_BINS, SIZE_BINS

__all__ = ["CHARTS", "MissingSectionError", "render_svg", "emit_svg", "emit_all_svg"]

PALETTE = ("#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1")
PLOT_H = 220
TOP = 40
LEFT = 60


class MissingSectionError(KeyError):
    pass


def _fmt(v) -> str:
    return "" if v is None else repr(v) if isinstance(v, float) else str(v)


class _Canvas:
    def __init__(self, width: int, title: str, y_max: float = 1.0, y_label: str = ""):
        self.width = width
        self.height = TOP + PLOT_H + 80
        self.y_max = y_max if y_max > 0 else 1.0
        self.root = ET.Element(
            "svg",
            xmlns="http://www.w3.org/2000/svg",
            width=str(width),
            height=str(self.height),
            viewBox=f"0 0 {width} {self.height}",
        )
        self.text(width / 2, 20, title, anchor="middle", size=14)
        self.line(LEFT, TOP, LEFT, TOP + PLOT_H, cls="axis")
        self.line(LEFT, TOP + PLOT_H, width - 10, TOP + PLOT_H, cls="axis")
        for k in range(5):
            v = self.y_max * k / 4
            y = self.y(v)
            self.line(LEFT - 4, y, LEFT, y, cls="tick")
            self.text(LEFT - 6, y + 4, f"{v:.2f}", anchor="end", size=10)
        if y_label:
            t = self.text(14, TOP + PLOT_H / 2, y_label, anchor="middle", size=11)
            t.set("transform", f"rotate(-90 14 {TOP + PLOT_H / 2})")

    def y(self, v: float) -> float:
        return TOP + PLOT_H * (1 - min(max(v, 0.0), self.y_max) / self.y_max)

    def text(self, x, y, s, anchor="start", size=10):
        el = ET.SubElement(
            self.root, "text", x=f"{x:.2f}", y=f"{y:.2f}", fill="#222",
            **{"font-size": str(size), "text-anchor": anchor, "font-family": "sans-serif"},
        )
        el.text = s
        return el

    def line(self, x1, y1, x2, y2, cls="", stroke="#333", dash=None, **data):
        attrs = {"x1": f"{x1:.2f}", "y1": f"{y1:.2f}", "x2": f"{x2:.2f}", "y2": f"{y2:.2f}",
                 "stroke": stroke}
        if cls:
            attrs["class"] = cls
        if dash:
            attrs["stroke-dasharray"] = dash
        attrs.update({f"data-{k}": _fmt(v) for k, v in data.items()})
        return ET.SubElement(self.root, "line", attrs)

    def rect(self, x, y, w, h, fill, cls="bar", **data):
        attrs = {"x": f"{x:.2f}", "y": f"{y:.2f}", "width": f"{w:.2f}", "height": f"{max(h, 0):.2f}",
                 "fill": fill, "class": cls}
        attrs.update({f"data-{k}": _fmt(v) for k, v in data.items()})
        return ET.SubElement(self.root, "rect", attrs)

    def circle(self, x, y, fill, cls="point", **data):
        attrs = {"cx": f"{x:.2f}", "cy": f"{y:.2f}", "r": "3", "fill": fill, "class": cls}
        attrs.update({f"data-{k}": _fmt(v) for k, v in data.items()})
        return ET.SubElement(self.root, "circle", attrs)

    def legend(self, labels: Sequence[str], colors: Sequence[str]):
        x = LEFT
        y = self.height - 20
        for lab, col in zip(labels, colors):
            ET.SubElement(self.root, "rect", x=f"{x}", y=f"{y - 9}", width="10", height="10", fill=col)
            self.text(x + 14, y, lab)
            x += 14 + 7 * len(lab) + 16

    def tostring(self) -> str:
        return ET.tostring(self.root, encoding="unicode")


def _class_name(report, cid) -> str:
    return report.get("metadata", {}).get("classes", {}).get(str(cid), str(cid))


def _stat_bars(report, table: dict, bins, title, series_label, y_label="") -> str:
    """Grouped bars with standard-error whiskers and a dashed class mean."""
    classes = list(table)
    slot = 14
    group_w = slot * len(bins) + 20
    width = LEFT + 20 + max(1, len(classes)) * group_w
    ymax = max([s["mean"] + (s["stderr"] or 0) for e in table.values()
                for s in e["bins"].values() if s["mean"] is not None] + [1.0])
    cv = _Canvas(width, title, ymax, y_label)
    for gi, cid in enumerate(classes):
        entry = table[cid]
        x0 = LEFT + 10 + gi * group_w
        for bi, b in enumerate(bins):
            s = entry["bins"][b]
            x = x0 + bi * slot
            color = PALETTE[bi % len(PALETTE)]
            if s["mean"] is not None:
                cv.rect(x, cv.y(s["mean"]), slot - 2, cv.y(0) - cv.y(s["mean"]), color,
                        **{"class": cid, "bin": b, "value": s["mean"], "count": s["count"],
                           "stderr": s["stderr"], "series": series_label})
                if s["stderr"] is not None:
                    xc = x + (slot - 2) / 2
                    cv.line(xc, cv.y(s["mean"] - s["stderr"]), xc, cv.y(s["mean"] + s["stderr"]),
                            cls="errorbar", stroke="#d62728", **{"class": cid, "bin": b})
        ov = entry["overall"]
        if ov["mean"] is not None:
            cv.line(x0 - 3, cv.y(ov["mean"]), x0 + slot * len(bins) + 1, cv.y(ov["mean"]),
                    cls="class-mean", stroke="#000", dash="4 3",
                    **{"class": cid, "value": ov["mean"], "count": ov["count"]})
        cv.text(x0 + slot * len(bins) / 2, TOP + PLOT_H + 16, _class_name(report, cid), anchor="middle")
    cv.legend(list(bins), [PALETTE[i % len(PALETTE)] for i in range(len(bins))])
    return cv.tostring()


def _sensitivity(report, attribute):
    table = report["sensitivity"][attribute]
    bins = SIZE_BINS if attribute == "size" else ASPECT_BINS
    return _stat_bars(report, table, bins, f"Per-instance accuracy by {attribute}",
                      "instance_accuracy", "accuracy")


def _error_breakdown(report):
    sec = report["error_breakdown"]
    cats = ("background", "similar", "dissimilar")
    classes = [c for c, e in sec.items() if e["proportions"]]
    bar_w = 26
    width = LEFT + 20 + max(1, len(classes)) * (bar_w + 16)
    cv = _Canvas(width, "Proportion of errors by confusion type", 1.0, "proportion")
    for i, cid in enumerate(classes):
        e = sec[cid]
        x = LEFT + 10 + i * (bar_w + 16)
        acc = 0.0
        for k, cat in enumerate(cats):
            p = e["proportions"][cat]
            cv.rect(x, cv.y(acc + p), bar_w, cv.y(acc) - cv.y(acc + p), PALETTE[k], cls="segment",
                    **{"class": cid, "category": cat, "value": p, "count": e["counts"][cat]})
            acc += p
        cv.text(x + bar_w / 2, TOP + PLOT_H + 16, _class_name(report, cid), anchor="middle")
    cv.legend(cats, PALETTE[:3])
    return cv.tostring()


def _merged_groups(report):
    gains = report["merged_groups"]["gains"]
    classes = list(gains)
    slot = 14
    width = LEFT + 20 + max(1, len(classes)) * (4 * slot + 20)
    cv = _Canvas(width, "Accuracy / IoU when similar classes merge", 1.0)
    series = (("accuracy", "merged_accuracy"), ("iou", "merged_iou"))
    for i, cid in enumerate(classes):
        g = gains[cid]
        x0 = LEFT + 10 + i * (4 * slot + 20)
        for k, key in enumerate(k for pair in series for k in pair):
            v = g[key]
            if v is None:
                continue
            cv.rect(x0 + k * slot, cv.y(v), slot - 2, cv.y(0) - cv.y(v), PALETTE[k],
                    **{"class": cid, "metric": key, "value": v, "count": g["count"]})
        cv.text(x0 + 2 * slot, TOP + PLOT_H + 16, _class_name(report, cid), anchor="middle")
    cv.legend(["accuracy", "merged accuracy", "IoU", "merged IoU"], PALETTE[:4])
    return cv.tostring()


def _misloc(report, metric="accuracy"):
    sec = report["mislocalisation_gain"]
    radii = list(sec["radii"])
    classes = [c for c in sec["baseline"]["per_class"] if sec["baseline"]["per_class"][c][metric] is not None]
    step = 18
    group_w = step * (len(radii) + 1) + 20
    width = LEFT + 20 + max(1, len(classes)) * group_w
    cv = _Canvas(width, f"{metric} after correcting mislocalisation", 1.0, metric)
    for i, cid in enumerate(classes):
        x0 = LEFT + 10 + i * group_w
        base = sec["baseline"]["per_class"][cid][metric]
        cv.line(x0, cv.y(base), x0 + step * len(radii), cv.y(base), cls="baseline", dash="4 3",
                **{"class": cid, "value": base})
        prev = None
        for k, r in enumerate(radii):
            v = sec["radii"][r]["metrics"]["per_class"][cid][metric]
            x = x0 + step * (k + 0.5)
            if prev is not None:
                cv.line(prev[0], prev[1], x, cv.y(v), cls="trend", stroke="#d62728")
            cv.circle(x, cv.y(v), "#d62728", **{"class": cid, "radius": r, "value": v})
            prev = (x, cv.y(v))
        cv.text(x0 + step * len(radii) / 2, TOP + PLOT_H + 16, _class_name(report, cid), anchor="middle")
    return cv.tostring()


def _boxes(report):
    sec = report["uncertainty"]
    measures = list(sec)
    nbins = max([len(sec[m]["by_distance"]) for m in measures] + [1])
    box_w = 16
    width = LEFT + 20 + len(measures) * (nbins * (box_w + 8) + 30)
    cv = _Canvas(width, "Uncertainty by distance to boundary", 1.0, "uncertainty")
    x = LEFT + 10
    for mi, m in enumerate(measures):
        start = x
        for b in sec[m]["by_distance"]:
            hi = "inf" if b["hi"] is None else b["hi"]
            data = {"measure": m, "lo": b["lo"], "hi": hi, "count": b["count"]}
            cv.rect(x, cv.y(b["p75"]), box_w, cv.y(b["p25"]) - cv.y(b["p75"]), PALETTE[mi],
                    cls="box", p25=b["p25"], p75=b["p75"], **data)
            cv.line(x, cv.y(b["median"]), x + box_w, cv.y(b["median"]), cls="median",
                    stroke="#000", value=b["median"], **data)
            x += box_w + 8
        cv.text((start + x) / 2, TOP + PLOT_H + 16, m, anchor="middle")
        x += 30
    return cv.tostring()


def _error_types(report):
    sec = report["uncertainty"]
    measures = list(sec)
    types = ("instance", "misloc", "similar", "dissimilar", "background")
    slot = 16
    width = LEFT + 20 + len(measures) * (slot * len(types) + 30)
    cv = _Canvas(width, "Uncertainty by error type", 1.0, "mean uncertainty")
    for mi, m in enumerate(measures):
        x0 = LEFT + 10 + mi * (slot * len(types) + 30)
        et = sec[m]["by_error_type"] or {}
        for k, name in enumerate(types):
            e = et.get(name)
            if not e or e["mean"] is None:
                continue
            cv.rect(x0 + k * slot, cv.y(e["mean"]), slot - 2, cv.y(0) - cv.y(e["mean"]), PALETTE[k],
                    **{"measure": m, "type": name, "value": e["mean"], "count": e["count"]})
        cv.text(x0 + slot * len(types) / 2, TOP + PLOT_H + 16, m, anchor="middle")
    cv.legend(types, PALETTE[:5])
    return cv.tostring()


def _unc_category(report, measure, attribute):
    table = report["uncertainty"][measure]["by_category"][attribute]
    bins = SIZE_BINS if attribute == "size" else ASPECT_BINS
    return _stat_bars(report, table, bins, f"{measure} by instance {attribute}", measure, "uncertainty")


def _topn(report):
    sec = report["topn"]
    ns = list(sec)
    slot = 30
    width = LEFT + 40 + len(ns) * 2 * slot
    cv = _Canvas(width, "Top-N accuracy and IoU", 1.0)
    for i, n in enumerate(ns):
        for k, key in enumerate(("mean_class_acc", "mean_iou")):
            v = sec[n][key]
            if v is None:
                continue
            x = LEFT + 10 + i * 2 * slot + k * (slot - 4)
            cv.rect(x, cv.y(v), slot - 6, cv.y(0) - cv.y(v), PALETTE[k],
                    **{"n": n, "metric": key, "value": v, "count": sec[n]["count"]})
        cv.text(LEFT + 10 + i * 2 * slot + slot - 4, TOP + PLOT_H + 16, f"top-{n}", anchor="middle")
    cv.legend(["mean class accuracy", "mean IoU"], PALETTE[:2])
    return cv.tostring()


# chart kind -> (required section, renderer)
CHARTS = {
    "sensitivity_size": ("sensitivity", lambda r: _sensitivity(r, "size")),
    "sensitivity_aspect": ("sensitivity", lambda r: _sensitivity(r, "aspect")),
    "error_breakdown": ("error_breakdown", _error_breakdown),
    "merged_groups": ("merged_groups", _merged_groups),
    "mislocalisation_accuracy": ("mislocalisation_gain", lambda r: _misloc(r, "accuracy")),
    "mislocalisation_iou": ("mislocalisation_gain", lambda r: _misloc(r, "iou")),
    "uncertainty_by_distance": ("uncertainty", _boxes),
    "uncertainty_by_error_type": ("uncertainty", _error_types),
    "topn": ("topn", _topn),
}


def render_svg(report: dict, kind: str) -> str:
    if kind.startswith("uncertainty_by_category:"):
        _, measure, attribute = kind.split(":")
        sec = report.get("uncertainty", {}).get(measure, {})
        if not sec.get("by_category"):
            raise MissingSectionError(kind)
        return _unc_category(report, measure, attribute)
    if kind not in CHARTS:
        raise KeyError(f"unknown chart kind {kind!r}")
    section, fn = CHARTS[kind]
    if not report.get(section):
        raise MissingSectionError(f"report has no {section!r} section")
    return fn(report)


def emit_svg(report: dict, kind: str, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{kind.replace(':', '_')}.svg"
    path.write_text(render_svg(report, kind))
    return path


def emit_all_svg(report: dict, out_dir) -> List[Path]:
    kinds = [k for k, (section, _) in CHARTS.items() if report.get(section)]
    for m, sec in (report.get("uncertainty") or {}).items():
        if sec.get("by_category"):
            kinds += [f"uncertainty_by_category:{m}:size", f"uncertainty_by_category:{m}:aspect"]
    return [emit_svg(report, k, out_dir) for k in kinds]
