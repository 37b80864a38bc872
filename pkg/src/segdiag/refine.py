"""Zoom-in refinement of small instances through an external scorer.

A scorer is any command line containing ``{input}`` and ``{output}``. It
receives a PNG crop (already upsampled) and must write an SCR1 score tensor
with one channel per taxonomy class at the crop's resolution, exiting 0.
"""
from __future__ import annotations

import logging
import shlex
import subprocess
import tempfile
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from .characteristics import BinScheme, assign_bins, fit_bins
from .core import InstanceRecord, Taxonomy, accumulate_confusion, extract_instances
from .ingest import (
    LOGITS,
    Manifest,
    bicubic_resize,
    load_instance_png,
    load_label_png,
    load_manifest,
    load_rgb,
    load_scores,
    read_scr1,
    softmax,
)
from .metrics import class_metrics, per_instance_accuracy

log = logging.getLogger(__name__)

__all__ = [
    "ScorerError",
    "ScorerSpec",
    "RefineConfig",
    "Crop",
    "select_single_small",
    "crop_around_max_activation",
    "gt_bbox_crop",
    "run_scorer",
    "splice_scores",
    "refine_image",
    "evaluate_refinement",
    "run_refinement",
    "MAX_ACTIVATION",
    "GT_BBOX",
]

MAX_ACTIVATION = "max_activation"
GT_BBOX = "gt_bbox"
SMALL_BINS = ("XS", "S")


class ScorerError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScorerSpec:
    command: Tuple[str, ...]
    timeout: float = 300.0

    def __post_init__(self):
        joined = " ".join(self.command)
        if "{input}" not in joined or "{output}" not in joined:
            raise ValueError("scorer command needs both {input} and {output} placeholders")

    @classmethod
    def from_string(cls, command: str, timeout: float = 300.0) -> "ScorerSpec":
        return cls(tuple(shlex.split(command)), timeout)

    def argv(self, input_path: Path, output_path: Path) -> List[str]:
        return [
            part.replace("{input}", str(input_path)).replace("{output}", str(output_path))
            for part in self.command
        ]


@dataclass(frozen=True)
class RefineConfig:
    target_classes: Tuple[int, ...]
    crop_side: int = 64
    factor: float = 4.0
    mode: str = MAX_ACTIVATION
    margin: int = 16
    scorer: Optional[ScorerSpec] = None
    workers: int = 1

    def __post_init__(self):
        if self.crop_side <= 0:
            raise ValueError("crop side must be positive")
        if self.factor < 1:
            raise ValueError("upsample factor must be >= 1")
        if self.margin < 0:
            raise ValueError("bbox margin must be >= 0")
        if self.mode not in (MAX_ACTIVATION, GT_BBOX):
            raise ValueError(f"unknown refine mode {self.mode!r}")


@dataclass(frozen=True)
class Crop:
    """Inclusive pixel rectangle."""

    row0: int
    col0: int
    row1: int
    col1: int

    @property
    def slices(self) -> Tuple[slice, slice]:
        return slice(self.row0, self.row1 + 1), slice(self.col0, self.col1 + 1)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.row1 - self.row0 + 1, self.col1 - self.col0 + 1

    def as_list(self) -> List[int]:
        return [self.row0, self.col0, self.row1, self.col1]


def select_single_small(
    records: Iterable[InstanceRecord], target_classes: Iterable[int]
) -> List[Tuple[str, InstanceRecord]]:
    """(image_id, record) for every image holding exactly one instance of a
    target class, that instance being XS or S. Sorted by image, then class."""
    targets = set(target_classes)
    by_key: Dict[Tuple[str, int], List[InstanceRecord]] = defaultdict(list)
    for r in records:
        if r.class_id in targets:
            if r.size_bin is None:
                raise ValueError(f"instance {r.instance_id} of {r.image_id!r} has no bins")
            by_key[(r.image_id, r.class_id)].append(r)
    out = []
    for (image_id, _), recs in sorted(by_key.items()):
        if len(recs) == 1 and recs[0].size_bin in SMALL_BINS:
            out.append((image_id, recs[0]))
    return out


def crop_around_max_activation(scores: np.ndarray, class_index: int, side: int) -> Crop:
    """side x side window centred on the channel's argmax, shifted to fit."""
    h, w, c = scores.shape
    if not 0 <= class_index < c:
        raise IndexError(f"class index {class_index} outside {c} channels")
    if side > min(h, w) or side <= 0:
        raise ValueError(f"crop side {side} does not fit a {h}x{w} image")
    row, col = divmod(int(np.argmax(scores[..., class_index])), w)
    r0 = min(max(row - side // 2, 0), h - side)
    c0 = min(max(col - side // 2, 0), w - side)
    return Crop(r0, c0, r0 + side - 1, c0 + side - 1)


def gt_bbox_crop(rec: InstanceRecord, margin: int, shape: Tuple[int, int]) -> Crop:
    if margin < 0:
        raise ValueError("margin must be >= 0")
    h, w = shape[:2]
    r0, c0, r1, c1 = rec.bbox
    return Crop(max(r0 - margin, 0), max(c0 - margin, 0), min(r1 + margin, h - 1), min(c1 + margin, w - 1))


def run_scorer(
    scorer: ScorerSpec, image: np.ndarray, num_classes: int, workdir: Optional[Path] = None
) -> np.ndarray:
    """Write ``image`` as PNG, run the scorer, return its probabilities."""
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        src = Path(tmp) / "crop.png"
        dst = Path(tmp) / "scores.scr1"
        Image.fromarray(image).save(src)
        argv = scorer.argv(src, dst)
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=scorer.timeout)
        except subprocess.TimeoutExpired as e:
            raise ScorerError(f"scorer timed out after {scorer.timeout}s") from e
        except OSError as e:
            raise ScorerError(f"cannot start scorer: {e}") from e
        if proc.returncode != 0:
            raise ScorerError(
                f"scorer exited {proc.returncode}: {proc.stderr.decode(errors='replace')[-500:]}"
            )
        if not dst.exists():
            raise ScorerError("scorer wrote no output")
        data, kind = read_scr1(dst)
    if data.shape != image.shape[:2] + (num_classes,):
        raise ScorerError(
            f"scorer output {data.shape} != expected {image.shape[:2] + (num_classes,)}"
        )
    if not np.isfinite(data).all():
        raise ScorerError("scorer output holds non-finite values")
    return softmax(data) if kind == LOGITS else data.astype(np.float64)


def _renormalize(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, None)
    s = p.sum(axis=-1, keepdims=True)
    flat = s[..., 0] <= 0
    if flat.any():
        p[flat] = 1.0
        s = p.sum(axis=-1, keepdims=True)
    return p / s


def splice_scores(scores: np.ndarray, crop: Crop, new_scores: np.ndarray) -> np.ndarray:
    """Downsample ``new_scores`` to the crop size and paste them in."""
    hc, wc = crop.shape
    small = bicubic_resize(new_scores, size=(hc, wc))
    out = np.array(scores, copy=True)
    out[crop.slices] = _renormalize(small)
    return out


def refine_image(
    image: np.ndarray,
    scores: np.ndarray,
    crop: Crop,
    cfg: RefineConfig,
    t: Taxonomy,
    scorer: Optional[ScorerSpec] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Re-score one crop; return (spliced scores, argmax label map)."""
    scorer = scorer or cfg.scorer
    if scorer is None:
        raise ScorerError("no scorer configured")
    patch = np.asarray(image)[crop.slices].astype(np.float64)
    up = bicubic_resize(patch, cfg.factor)
    up = np.clip(np.rint(up), 0, 255).astype(np.uint8)
    new = run_scorer(scorer, up, t.num_classes)
    spliced = splice_scores(scores, crop, new)
    labels = np.asarray(t.class_ids)[np.argmax(spliced, axis=-1)]
    return spliced, labels


def evaluate_refinement(
    selection: Sequence[Tuple[str, InstanceRecord]],
    gts: Mapping[str, np.ndarray],
    insts: Mapping[str, np.ndarray],
    preds: Mapping,
    t: Taxonomy,
) -> List[dict]:
    """Per target class: mean instance accuracy for XS and S instances, plus
    the class's IoU and accuracy pooled over its selected images.

    ``preds`` is keyed by image id, or by ``(image_id, class_id)`` when an
    image was refined separately for several target classes.
    """

    def pred_of(image_id, cid):
        return preds[(image_id, cid)] if (image_id, cid) in preds else preds[image_id]

    by_class: Dict[int, List[Tuple[str, InstanceRecord]]] = defaultdict(list)
    for image_id, rec in selection:
        by_class[rec.class_id].append((image_id, rec))
    rows = []
    for cid in sorted(by_class):
        accs: Dict[str, List[float]] = {b: [] for b in SMALL_BINS}
        cm = None
        for image_id in sorted({i for i, _ in by_class[cid]}):
            c = accumulate_confusion(gts[image_id], pred_of(image_id, cid), t)
            cm = c if cm is None else cm + c
        for image_id, rec in by_class[cid]:
            accs[rec.size_bin].append(
                per_instance_accuracy(rec, insts[image_id], gts[image_id], pred_of(image_id, cid), t.ignore_id)
            )
        m = class_metrics(cm)
        row = {"class_id": cid, "images": len({i for i, _ in by_class[cid]})}
        for b in SMALL_BINS:
            row[f"{b}_count"] = len(accs[b])
            row[f"{b}_instance_acc"] = float(np.mean(accs[b])) if accs[b] else None
        row["iou"] = m.iou.get(cid)
        row["accuracy"] = m.accuracy.get(cid)
        rows.append(row)
    return rows


def _crop_for(mode: str, scores: np.ndarray, rec: InstanceRecord, cfg: RefineConfig, t: Taxonomy) -> Crop:
    if mode == MAX_ACTIVATION:
        return crop_around_max_activation(scores, t.index_of(rec.class_id), cfg.crop_side)
    return gt_bbox_crop(rec, cfg.margin, scores.shape)


def run_refinement(
    manifest,
    cfg: RefineConfig,
    modes: Optional[Sequence[str]] = None,
    scheme: Optional[BinScheme] = None,
    bin_scope: str = "per-class",
) -> dict:
    """Select, refine and evaluate; returns the ``refinement`` report section.

    Bins are fitted on every instance in the manifest unless ``scheme`` is
    given. Each selected (image, class) pair is refined on its own, so an
    image holding a small car and a small bottle is scored twice.
    """
    if not isinstance(manifest, Manifest):
        manifest = load_manifest(manifest)
    if cfg.scorer is None:
        raise ScorerError("no scorer configured")
    t = manifest.taxonomy
    modes = tuple(modes or (cfg.mode,))
    for m in modes:
        if m not in (MAX_ACTIVATION, GT_BBOX):
            raise ValueError(f"unknown refine mode {m!r}")
    unknown = set(cfg.target_classes) - set(t.class_ids)
    if unknown:
        raise ValueError(f"target classes not in taxonomy: {sorted(unknown)}")

    by_id = {r.image_id: r for r in manifest.records}
    gts, insts, raw = {}, {}, []
    for r in sorted(manifest.records, key=lambda r: r.image_id):
        if r.instances is None:
            continue
        gts[r.image_id] = load_label_png(r.gt, t)
        insts[r.image_id] = load_instance_png(r.instances)
        raw += extract_instances(insts[r.image_id], gts[r.image_id], t, r.image_id)
    if scheme is None:
        scheme = fit_bins(raw, bin_scope, classes=[c for c in t.class_ids if c != t.background_id])
    selection = select_single_small((assign_bins(r, scheme) for r in raw), cfg.target_classes)

    skipped, failures, usable = [], [], []
    for image_id, rec in selection:
        mr = by_id[image_id]
        if mr.image is None or mr.scores is None:
            what = "RGB image" if mr.image is None else "scores"
            log.warning("skipping %s: no %s in manifest", image_id, what)
            skipped.append({"image_id": image_id, "class_id": rec.class_id, "reason": f"no {what}"})
        else:
            usable.append((image_id, rec))

    def task(item):
        (image_id, rec), mode = item
        mr = by_id[image_id]
        scores = load_scores(mr.scores, t)
        crop = _crop_for(mode, scores, rec, cfg, t)
        _, labels = refine_image(load_rgb(mr.image), scores, crop, cfg, t)
        return crop, labels

    items = [(pair, mode) for mode in modes for pair in usable]
    results: List = [None] * len(items)

    def guarded(k):
        try:
            results[k] = task(items[k])
        except Exception as e:  # reported per pair, the rest still runs
            results[k] = e

    if cfg.workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            list(pool.map(guarded, range(len(items))))
    else:
        for k in range(len(items)):
            guarded(k)

    bad = set()
    for ((image_id, rec), mode), res in zip(items, results):
        if isinstance(res, Exception):
            failures.append({"image_id": image_id, "class_id": rec.class_id, "mode": mode,
                             "error": f"{type(res).__name__}: {res}"})
            bad.add((image_id, rec.class_id))
    # a pair that failed under any mode is dropped everywhere so rows stay comparable
    kept = [(i, r) for i, r in usable if (i, r.class_id) not in bad]

    orig = {}
    for image_id in sorted({i for i, _ in kept}):
        mr = by_id[image_id]
        orig[image_id] = np.asarray(t.class_ids)[np.argmax(load_scores(mr.scores, t), axis=-1)]
    methods = {"orig": evaluate_refinement(kept, gts, insts, orig, t)}
    crops: Dict[str, List[dict]] = {}
    for mode in modes:
        refined = {}
        crops[mode] = []
        for ((image_id, rec), m), res in zip(items, results):
            if m != mode or (image_id, rec.class_id) in bad:
                continue
            crop, labels = res
            refined[(image_id, rec.class_id)] = labels
            crops[mode].append({"image_id": image_id, "class_id": rec.class_id, "crop": crop.as_list()})
        methods[mode] = evaluate_refinement(kept, gts, insts, refined, t)

    return {
        "config": {
            "target_classes": list(cfg.target_classes),
            "crop_side": cfg.crop_side,
            "factor": cfg.factor,
            "modes": list(modes),
            "margin": cfg.margin,
            "scorer": list(cfg.scorer.command),
        },
        "bins": scheme.to_dict(),
        "selection": [
            {"image_id": i, "class_id": r.class_id, "instance_id": r.instance_id,
             "pixel_count": r.pixel_count, "size_bin": r.size_bin}
            for i, r in selection
        ],
        "skipped": skipped,
        "failures": failures,
        "crops": crops,
        "methods": methods,
    }
