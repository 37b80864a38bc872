"""Run every enabled analysis over a manifest and assemble the JSON report.

Images are analysed independently (optionally in worker processes); each
yields an immutable :class:`ImagePartial`. Partials are folded in image-id
order, so the report does not depend on the worker count.
"""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .characteristics import BinScheme, assign_bins, category_distribution, fit_bins, sensitivity
from .core import ASPECT_BINS, SIZE_BINS, ConfusionMatrix, InstanceRecord, Taxonomy, accumulate_confusion, extract_instances
from .errortax import ErrorBreakdown, MislocalisationGain, error_breakdown, mislocalisation_gain, mislocalisation_mask
from .ingest import (
    Manifest,
    ManifestRecord,
    bicubic_resize,
    load_instance_png,
    load_label_png,
    load_manifest,
    load_scores,
)
from .metrics import class_metrics, merged_group_metrics, per_instance_accuracy, topn_confusion
from .uncertainty import (
    DEFAULT_DISTANCE_EDGES,
    MEASURES,
    DistanceSamples,
    ErrorTypeSums,
    FgBgCounts,
    boundary_distance_map,
    boundary_mask,
    distance_samples,
    fgbg_from_uncertainty,
    instance_mean_uncertainty,
    uncertainty_by_category,
    uncertainty_by_error_type,
    uncertainty_map,
)

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "DataError",
    "ANALYSES",
    "SCORE_ANALYSES",
    "INSTANCE_ANALYSES",
    "RunConfig",
    "ImageData",
    "load_image_data",
    "ImagePartial",
    "analyze_image",
    "run",
    "run_refine",
    "write_report",
    "report_json",
    "to_jsonable",
]

ANALYSES = (
    "metrics",
    "topn",
    "merged_groups",
    "sensitivity",
    "category_distribution",
    "error_breakdown",
    "mislocalisation_gain",
    "uncertainty",
    "fgbg",
)
SCORE_ANALYSES = ("topn", "uncertainty", "fgbg")
INSTANCE_ANALYSES = ("sensitivity", "category_distribution")


class ConfigError(ValueError):
    pass


class DataError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    analyses: Optional[Tuple[str, ...]] = None  # None: everything the inputs allow
    misloc_radii: Tuple[int, ...] = (5, 10, 15, 20, 30)
    misloc_radius: int = 5
    distance_edges: Tuple[float, ...] = DEFAULT_DISTANCE_EDGES
    distance_boundary: str = "any"
    topn: Optional[int] = None  # None: min(5, |C|)
    exclude_bg_gt: bool = False
    exclude_misloc_from_breakdown: bool = False
    bin_scope: str = "per-class"
    bins_path: Optional[str] = None
    measures: Tuple[str, ...] = MEASURES
    resize_scores: bool = False
    jobs: int = 1
    out: Optional[str] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["distance_edges"] = [None if math.isinf(e) else e for e in self.distance_edges]
        d.pop("jobs")
        d.pop("out")
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        kw = dict(d)
        for key in ("analyses", "misloc_radii", "measures"):
            if kw.get(key) is not None:
                kw[key] = tuple(kw[key])
        if "distance_edges" in kw:
            kw["distance_edges"] = tuple(math.inf if e is None else float(e) for e in kw["distance_edges"])
        unknown = set(kw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def resolve_config(cfg: RunConfig, manifest: Manifest) -> RunConfig:
    """Check the config against the manifest and fill in defaults."""
    t = manifest.taxonomy
    explicit = cfg.analyses is not None
    analyses = tuple(cfg.analyses) if explicit else ANALYSES
    unknown = set(analyses) - set(ANALYSES)
    if unknown:
        raise ConfigError(f"unknown analyses: {sorted(unknown)}")
    if list(cfg.misloc_radii) != sorted(cfg.misloc_radii) or any(r < 0 for r in cfg.misloc_radii):
        raise ConfigError("mislocalisation radii must be non-negative and ascending")
    if cfg.misloc_radius < 0:
        raise ConfigError("mislocalisation radius must be non-negative")
    edges = list(cfg.distance_edges)
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ConfigError("distance bin edges must be strictly ascending")
    if cfg.distance_boundary not in ("any", "same_class"):
        raise ConfigError("distance_boundary must be 'any' or 'same_class'")
    if cfg.bin_scope not in ("per-class", "global"):
        raise ConfigError("bin_scope must be 'per-class' or 'global'")
    bad = set(cfg.measures) - set(MEASURES)
    if bad:
        raise ConfigError(f"unknown uncertainty measures: {sorted(bad)}")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    topn = cfg.topn if cfg.topn is not None else min(5, t.num_classes)
    if not 1 <= topn <= t.num_classes:
        raise ConfigError(f"topn must be in [1, {t.num_classes}]")

    def drop(names, reason):
        nonlocal analyses
        hit = [a for a in analyses if a in names]
        if hit and explicit:
            raise ConfigError(f"{', '.join(hit)} {reason}")
        analyses = tuple(a for a in analyses if a not in names)

    if not manifest.has_scores:
        drop(SCORE_ANALYSES, "need score tensors for every record")
    if not any(r.instances is not None for r in manifest.records):
        drop(INSTANCE_ANALYSES, "need instance maps")
    if t.background_id is None:
        drop(("fgbg",), "needs a taxonomy with a background class")
    return replace(cfg, analyses=analyses, topn=topn)


@dataclass
class ImageData:
    image_id: str
    gt: np.ndarray
    pred: np.ndarray
    scores: Optional[np.ndarray] = None
    instances: Optional[np.ndarray] = None
    instance_classes: Optional[Dict[int, int]] = None


def load_image_data(rec: ManifestRecord, t: Taxonomy, resize_scores: bool = False) -> ImageData:
    gt = load_label_png(rec.gt, t)
    scores = None
    if rec.scores is not None:
        scores = load_scores(rec.scores, t)
        if scores.shape[:2] != gt.shape:
            if not resize_scores:
                raise DataError(
                    f"{rec.image_id}: scores {scores.shape[:2]} vs ground truth {gt.shape}"
                )
            scores = bicubic_resize(scores, size=gt.shape)
            scores = np.clip(scores, 0, None)
            scores /= scores.sum(axis=-1, keepdims=True)
        pred = np.asarray(t.class_ids)[np.argmax(scores, axis=-1)]
    else:
        pred = load_label_png(rec.pred, t)
    inst = load_instance_png(rec.instances) if rec.instances is not None else None
    classes = None
    if rec.instance_classes is not None:
        with open(rec.instance_classes) as f:
            classes = {int(k): int(v) for k, v in json.load(f).items()}
    return ImageData(rec.image_id, gt, pred, scores, inst, classes)


@dataclass
class InstanceResult:
    record: InstanceRecord
    accuracy: float
    uncertainty: Dict[str, float]


@dataclass
class ImagePartial:
    image_id: str
    confusion: Optional[ConfusionMatrix] = None
    topn: Dict[int, ConfusionMatrix] = field(default_factory=dict)
    breakdown: Optional[ErrorBreakdown] = None
    misloc: Optional[MislocalisationGain] = None
    instances: List[InstanceResult] = field(default_factory=list)
    distance: Dict[str, DistanceSamples] = field(default_factory=dict)
    error_types: Dict[str, ErrorTypeSums] = field(default_factory=dict)
    fgbg: Dict[str, FgBgCounts] = field(default_factory=dict)


def _distance_map(gt: np.ndarray, mode: str) -> np.ndarray:
    if mode == "any":
        return boundary_distance_map(gt)
    # same_class: only boundary pixels carrying the pixel's own label count
    from scipy import ndimage

    b = boundary_mask(gt)
    out = np.full(gt.shape, np.inf)
    for label in np.unique(gt).tolist():
        own = gt == label
        src = b & own
        if src.any():
            out[own] = ndimage.distance_transform_edt(~src)[own]
    return out


def analyze_image(data: ImageData, t: Taxonomy, cfg: RunConfig) -> ImagePartial:
    """Everything one image contributes; no cross-image state is needed."""
    a = set(cfg.analyses)
    gt, pred = data.gt, data.pred
    part = ImagePartial(data.image_id)
    if a & {"metrics", "merged_groups"}:
        part.confusion = accumulate_confusion(gt, pred, t, cfg.exclude_bg_gt)
    if "topn" in a:
        part.topn = {
            n: topn_confusion(gt, data.scores, n, t, cfg.exclude_bg_gt) for n in range(1, cfg.topn + 1)
        }
    if "error_breakdown" in a:
        exclude = None
        if cfg.exclude_misloc_from_breakdown and cfg.misloc_radii:
            exclude = mislocalisation_mask(gt, pred, t, cfg.misloc_radii[0])
        part.breakdown = error_breakdown(gt, pred, t, exclude)
    if "mislocalisation_gain" in a:
        part.misloc = mislocalisation_gain(gt, pred, t, cfg.misloc_radii, cfg.exclude_bg_gt)

    umaps = {}
    if a & {"uncertainty", "fgbg"}:
        umaps = {m: uncertainty_map(data.scores, m) for m in cfg.measures}
    if "uncertainty" in a:
        dmap = _distance_map(gt, cfg.distance_boundary)
        valid = gt != t.ignore_id
        for m, u in umaps.items():
            part.distance[m] = distance_samples(u, dmap, cfg.distance_edges, valid)
            part.error_types[m] = uncertainty_by_error_type(
                gt, pred, u, t, cfg.misloc_radius, data.instances
            )
    if "fgbg" in a:
        part.fgbg = {m: fgbg_from_uncertainty(u, gt, t) for m, u in umaps.items()}

    if data.instances is not None and a & {"sensitivity", "category_distribution", "uncertainty"}:
        recs = extract_instances(data.instances, gt, t, data.image_id, data.instance_classes)
        for r in recs:
            acc = per_instance_accuracy(r, data.instances, gt, pred, t.ignore_id)
            unc = {m: instance_mean_uncertainty(r, u, data.instances) for m, u in umaps.items()}
            part.instances.append(InstanceResult(r, acc, unc))
    return part


def _analyze_record(args) -> Tuple[str, Optional[ImagePartial], Optional[str]]:
    rec, t, cfg = args
    try:
        data = load_image_data(rec, t, cfg.resize_scores)
        return rec.image_id, analyze_image(data, t, cfg), None
    except Exception as e:  # collected into metadata.failures
        return rec.image_id, None, f"{type(e).__name__}: {e}"


def _fold(items):
    out = None
    for x in items:
        if x is None:
            continue
        out = x if out is None else out + x
    return out


def to_jsonable(obj):
    """Recursively convert numpy values; NaN and inf become None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return None if math.isnan(f) or math.isinf(f) else f
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def _stat_table(stats: Dict[int, dict]) -> dict:
    return {
        str(cid): {
            "bins": {b: s.to_dict() for b, s in entry["bins"].items()},
            "overall": entry["overall"].to_dict(),
        }
        for cid, entry in stats.items()
    }


def _metadata(manifest: Manifest, config: dict, **extra) -> dict:
    t = manifest.taxonomy
    meta = {
        "tool": "segdiag",
        "version": __version__,
        "manifest": str(manifest.path) if manifest.path else None,
        "dataset": manifest.dataset,
        "taxonomy_sha256": t.digest(),
        "classes": {str(cid): name for cid, name in t.classes},
        "config": config,
    }
    meta.update(extra)
    meta["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    return meta


def run(manifest, config: Optional[RunConfig] = None) -> dict:
    """Analyse a manifest (object or path) and return the report dict."""
    if not isinstance(manifest, Manifest):
        manifest = load_manifest(manifest)
    cfg = resolve_config(config or RunConfig(), manifest)
    t = manifest.taxonomy
    a = set(cfg.analyses)
    records = sorted(manifest.records, key=lambda r: r.image_id)
    jobs = [(r, t, cfg) for r in records]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_analyze_record, jobs))
    else:
        results = [_analyze_record(j) for j in jobs]
    results.sort(key=lambda x: x[0])
    failures = [{"image_id": i, "error": err} for i, _, err in results if err]
    parts = [p for _, p, _ in results if p is not None]
    for f in failures:
        log.warning("image %s failed: %s", f["image_id"], f["error"])
    if records and not parts:
        raise DataError("every image failed; first error: " + failures[0]["error"])

    report: dict = {
        "metadata": _metadata(
            manifest,
            cfg.to_dict(),
            num_images=len(records),
            num_analysed=len(parts),
            failures=failures,
        )
    }

    confusion = _fold(p.confusion for p in parts) or ConfusionMatrix.zeros(t.class_ids)
    if "metrics" in a:
        section = class_metrics(confusion).to_dict()
        section["confusion"] = confusion.entries()
        report["metrics"] = section
    if "topn" in a:
        report["topn"] = {
            str(n): class_metrics(_fold(p.topn[n] for p in parts)).to_dict()
            for n in range(1, cfg.topn + 1)
        }
    if "merged_groups" in a:
        mg = merged_group_metrics(confusion, t)
        report["merged_groups"] = {
            "representative": {str(k): v for k, v in mg.representative.items()},
            "groups": {k: list(v) for k, v in sorted(t.groups.items())},
            "merged": mg.merged.to_dict(),
            "gains": {
                str(cid): {
                    "count": mg.original.gt_pixels[cid],
                    "accuracy": mg.original.accuracy[cid],
                    "merged_accuracy": mg.original.accuracy[cid] + mg.accuracy_gain[cid],
                    "accuracy_gain": mg.accuracy_gain[cid],
                    "iou": mg.original.iou[cid],
                    "merged_iou": mg.merged.iou[mg.representative[cid]],
                    "iou_gain": mg.iou_gain[cid],
                }
                for cid in sorted(mg.accuracy_gain)
            },
        }

    inst_results = [ir for p in parts for ir in p.instances]
    if inst_results:
        raw = [ir.record for ir in inst_results]
        if cfg.bins_path:
            scheme = BinScheme.from_dict(json.loads(Path(cfg.bins_path).read_text()))
        else:
            scheme = fit_bins(raw, cfg.bin_scope, classes=[c for c in t.class_ids if c != t.background_id])
        binned = [assign_bins(r, scheme) for r in raw]
        accs = [ir.accuracy for ir in inst_results]
        report["bins"] = scheme.to_dict()
        report["instances"] = [
            dict(r.to_dict(), accuracy=ir.accuracy, uncertainty=ir.uncertainty)
            for r, ir in zip(binned, inst_results)
        ]
        if "sensitivity" in a:
            sens = sensitivity(binned, accs)
            report["sensitivity"] = {k: _stat_table(v) for k, v in sens.items()}
        if "category_distribution" in a:
            report["category_distribution"] = {
                str(cid): {
                    "count": d["count"],
                    "size_bins": list(SIZE_BINS),
                    "aspect_bins": list(ASPECT_BINS),
                    "counts": d["counts"],
                    "size_marginal": d["size_marginal"],
                    "aspect_marginal": d["aspect_marginal"],
                }
                for cid, d in category_distribution(binned).items()
            }
    else:
        binned, inst_results = [], []

    if "error_breakdown" in a:
        eb = _fold(p.breakdown for p in parts) or ErrorBreakdown({})
        report["error_breakdown"] = eb.to_dict()
    if "mislocalisation_gain" in a:
        mg = _fold(p.misloc for p in parts)
        report["mislocalisation_gain"] = mg.to_dict() if mg else None
    if "uncertainty" in a:
        section = {}
        for m in cfg.measures:
            dist = _fold(p.distance[m] for p in parts)
            et = _fold(p.error_types[m] for p in parts)
            entry = {
                "by_distance": dist.stats() if dist else [],
                "by_error_type": et.to_dict() if et else None,
                "misloc_radius": cfg.misloc_radius,
            }
            if binned:
                vals = [ir.uncertainty[m] for ir in inst_results]
                cat = uncertainty_by_category(binned, values=vals)
                entry["by_category"] = {k: _stat_table(v) for k, v in cat.items()}
            section[m] = entry
        report["uncertainty"] = section
    if "fgbg" in a:
        report["fgbg"] = {m: _fold(p.fgbg[m] for p in parts).to_dict() for m in cfg.measures}
    return to_jsonable(report)


def run_refine(manifest, refine_cfg, modes=None, bin_scope: str = "per-class", bins_path=None) -> dict:
    """Report holding only metadata and the ``refinement`` section."""
    from .refine import run_refinement

    if not isinstance(manifest, Manifest):
        manifest = load_manifest(manifest)
    scheme = BinScheme.from_dict(json.loads(Path(bins_path).read_text())) if bins_path else None
    section = run_refinement(manifest, refine_cfg, modes, scheme, bin_scope)
    meta = _metadata(manifest, section["config"], num_images=len(manifest.records))
    return to_jsonable({"metadata": meta, "refinement": section})


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def write_report(report: dict, out_dir, charts: bool = True) -> Path:
    """Write report.json plus CSV tables and SVG charts under ``out_dir``."""
    from .charts import emit_all_svg
    from .tables import emit_all_csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    path.write_text(report_json(report))
    emit_all_csv(report, out / "tables")
    if charts:
        emit_all_svg(report, out / "charts")
    return path
