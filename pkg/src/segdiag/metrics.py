"""Accuracy / IoU from confusion counts, plus top-N and group-merged variants."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .core import (
    ConfusionMatrix,
    InstanceRecord,
    ShapeMismatchError,
    Taxonomy,
    accumulate_confusion,
)

__all__ = [
    "ClassMetrics",
    "pixel_accuracy",
    "iou",
    "class_metrics",
    "per_instance_accuracy",
    "topn_prediction",
    "topn_confusion",
    "topn_metrics",
    "group_representatives",
    "merge_confusion",
    "MergedGroups",
    "merged_group_metrics",
]


@dataclass(frozen=True)
class ClassMetrics:
    """Per-class accuracy/IoU keyed by class id.

    Classes without ground-truth pixels are missing from ``accuracy``;
    classes absent from both ground truth and prediction are missing from
    ``iou``. ``mean_iou`` averages over classes present in the ground truth.
    """

    accuracy: Dict[int, float]
    iou: Dict[int, float]
    gt_pixels: Dict[int, int]
    total_pixel_acc: float
    mean_class_acc: float
    mean_iou: float
    num_pixels: int

    def to_dict(self) -> dict:
        return {
            "per_class": {
                str(cid): {
                    "count": self.gt_pixels.get(cid, 0),
                    "accuracy": self.accuracy.get(cid),
                    "iou": self.iou.get(cid),
                }
                for cid in sorted(set(self.accuracy) | set(self.iou))
            },
            "total_pixel_acc": _finite_or_none(self.total_pixel_acc),
            "mean_class_acc": _finite_or_none(self.mean_class_acc),
            "mean_iou": _finite_or_none(self.mean_iou),
            "count": self.num_pixels,
        }


def _finite_or_none(x: float) -> Optional[float]:
    return None if x is None or math.isnan(x) else x


def pixel_accuracy(cm: ConfusionMatrix) -> Tuple[Dict[int, float], float]:
    """Per-class ``s_ii / g_i`` (classes with g_i > 0) and pooled total."""
    g = cm.gt_totals
    diag = np.diag(cm.counts)
    per_class = {
        cid: float(diag[i] / g[i]) for i, cid in enumerate(cm.class_ids) if g[i] > 0
    }
    total = float(diag.sum() / g.sum()) if g.sum() > 0 else float("nan")
    return per_class, total


def iou(cm: ConfusionMatrix) -> Tuple[Dict[int, float], float]:
    """Per-class ``s_ii / (g_i + p_i - s_ii)`` and mean over classes in GT."""
    g = cm.gt_totals
    p = cm.pred_totals
    diag = np.diag(cm.counts)
    union = g + p - diag
    per_class = {
        cid: float(diag[i] / union[i]) for i, cid in enumerate(cm.class_ids) if union[i] > 0
    }
    present = [per_class[cid] for i, cid in enumerate(cm.class_ids) if g[i] > 0]
    mean = float(np.mean(present)) if present else float("nan")
    return per_class, mean


def class_metrics(cm: ConfusionMatrix) -> ClassMetrics:
    acc, total = pixel_accuracy(cm)
    ious, miou = iou(cm)
    g = cm.gt_totals
    return ClassMetrics(
        accuracy=acc,
        iou=ious,
        gt_pixels={cid: int(g[i]) for i, cid in enumerate(cm.class_ids) if g[i] > 0},
        total_pixel_acc=total,
        mean_class_acc=float(np.mean(list(acc.values()))) if acc else float("nan"),
        mean_iou=miou,
        num_pixels=cm.total,
    )


def per_instance_accuracy(
    rec: InstanceRecord,
    inst: np.ndarray,
    gt: np.ndarray,
    pred: np.ndarray,
    ignore_id: int = 255,
) -> float:
    """Fraction of the instance's non-ignore pixels predicted as its class."""
    if not (np.shape(inst) == np.shape(gt) == np.shape(pred)):
        raise ShapeMismatchError("instance, gt and pred maps differ in shape")
    r0, c0, r1, c1 = rec.bbox
    sl = (slice(r0, r1 + 1), slice(c0, c1 + 1))
    mask = (np.asarray(inst)[sl] == rec.instance_id) & (np.asarray(gt)[sl] != ignore_id)
    n = int(mask.sum())
    if n == 0:
        raise ValueError(f"instance {rec.instance_id} has no non-ignore pixels")
    return float((np.asarray(pred)[sl][mask] == rec.class_id).sum() / n)


def topn_prediction(gt: np.ndarray, scores: np.ndarray, n: int, t: Taxonomy) -> np.ndarray:
    """Label map where pixels whose GT class ranks in the top ``n`` take the GT label.

    A class qualifies when its probability is at least the n-th largest at
    that pixel, so ties at the cut-off count as hits. All other pixels keep
    the argmax label.
    """
    gt = np.asarray(gt)
    scores = np.asarray(scores)
    c = t.num_classes
    if scores.shape != gt.shape + (c,):
        raise ShapeMismatchError(f"scores {scores.shape} do not match gt {gt.shape} x {c}")
    if not 1 <= n <= c:
        raise ValueError(f"n must be in [1, {c}], got {n}")
    ids = np.asarray(t.class_ids)
    pred = ids[np.argmax(scores, axis=-1)]
    gt_idx = t.to_indices(gt)
    valid = gt_idx >= 0
    nth = np.partition(scores, c - n, axis=-1)[..., c - n]
    gt_score = np.take_along_axis(scores, np.maximum(gt_idx, 0)[..., None], axis=-1)[..., 0]
    hit = valid & (gt_score >= nth)
    return np.where(hit, gt, pred)


def topn_confusion(
    gt: np.ndarray, scores: np.ndarray, n: int, t: Taxonomy, exclude_background: bool = False
) -> ConfusionMatrix:
    return accumulate_confusion(gt, topn_prediction(gt, scores, n, t), t, exclude_background)


def topn_metrics(
    gt: np.ndarray, scores: np.ndarray, n: int, t: Taxonomy, exclude_background: bool = False
) -> ClassMetrics:
    return class_metrics(topn_confusion(gt, scores, n, t, exclude_background))


def group_representatives(t: Taxonomy) -> Dict[int, int]:
    """Map each class id to its group's smallest id (itself when ungrouped)."""
    rep = {cid: cid for cid in t.class_ids}
    for members in t.groups.values():
        if members:
            head = min(members)
            for cid in members:
                rep[cid] = head
    return rep


def merge_confusion(cm: ConfusionMatrix, t: Taxonomy) -> ConfusionMatrix:
    """Relabel both axes by group representative."""
    rep = group_representatives(t)
    merged_ids = tuple(sorted(set(rep[cid] for cid in cm.class_ids), key=cm.class_ids.index))
    pos = {cid: merged_ids.index(rep[cid]) for cid in cm.class_ids}
    m = len(merged_ids)
    proj = np.zeros((len(cm.class_ids), m), dtype=np.int64)
    for i, cid in enumerate(cm.class_ids):
        proj[i, pos[cid]] = 1
    return ConfusionMatrix(merged_ids, proj.T @ cm.counts @ proj)


@dataclass(frozen=True)
class MergedGroups:
    merged: ClassMetrics
    representative: Dict[int, int]
    accuracy_gain: Dict[int, float]
    iou_gain: Dict[int, float]
    original: ClassMetrics


def merged_group_metrics(cm: ConfusionMatrix, t: Taxonomy) -> MergedGroups:
    """Metrics when every semantic group is scored as one label.

    ``accuracy_gain[c]`` is the share of class c's pixels predicted inside
    its group minus its plain accuracy; ``iou_gain[c]`` compares the merged
    label's IoU with class c's own.
    """
    rep = group_representatives(t)
    merged_cm = merge_confusion(cm, t)
    merged = class_metrics(merged_cm)
    original = class_metrics(cm)
    ids = cm.class_ids
    g = cm.gt_totals
    acc_gain = {}
    iou_gain = {}
    for i, cid in enumerate(ids):
        if g[i] == 0:
            continue
        same = [j for j, other in enumerate(ids) if rep[other] == rep[cid]]
        in_group = cm.counts[i, same].sum() / g[i]
        acc_gain[cid] = float(in_group - original.accuracy[cid])
        iou_gain[cid] = float(merged.iou[rep[cid]] - original.iou[cid])
    return MergedGroups(merged, rep, acc_gain, iou_gain, original)
