"""Confusion categories of erroneous pixels and mislocalisation correction."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .core import ConfusionMatrix, ShapeMismatchError, Taxonomy, confusion_from_indices
from .metrics import class_metrics

__all__ = [
    "BACKGROUND",
    "SIMILAR",
    "DISSIMILAR",
    "CATEGORIES",
    "classify_confusion",
    "confusion_category_map",
    "ErrorBreakdown",
    "error_breakdown",
    "is_mislocalisation",
    "window_presence",
    "mislocalisation_mask",
    "MislocalisationGain",
    "mislocalisation_gain",
]

BACKGROUND = "background"
SIMILAR = "similar"
DISSIMILAR = "dissimilar"
CATEGORIES = (BACKGROUND, SIMILAR, DISSIMILAR)


def classify_confusion(gt_label: int, pred_label: int, t: Taxonomy) -> str:
    if gt_label == pred_label:
        raise ValueError("pixel is predicted correctly")
    if gt_label == t.ignore_id:
        raise ValueError("ground truth is the ignore label")
    if t.background_id is not None and gt_label == t.background_id:
        raise ValueError("background ground truth is outside the error taxonomy")
    if t.background_id is not None and pred_label == t.background_id:
        return BACKGROUND
    g = t.group_of(gt_label)
    if g is not None and g == t.group_of(pred_label):
        return SIMILAR
    return DISSIMILAR


def confusion_category_map(gt: np.ndarray, pred: np.ndarray, t: Taxonomy) -> np.ndarray:
    """Per pixel: -1 (not analysed) or the index of its category in CATEGORIES.

    Correct pixels, ignore pixels and background ground truth are -1.
    """
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if gt.shape != pred.shape:
        raise ShapeMismatchError(f"{gt.shape} vs {pred.shape}")
    gi = t.to_indices(gt)
    pi = t.to_indices(pred)
    err = (gi >= 0) & (gi != pi)
    bg = -1 if t.background_id is None else t.index_of(t.background_id)
    if bg >= 0:
        err &= gi != bg
    groups = t.group_index_array()
    gg = groups[np.maximum(gi, 0)]
    pg = groups[np.maximum(pi, 0)]
    cat = np.where((gg >= 0) & (gg == pg), 1, 2)
    if bg >= 0:
        cat = np.where(pi == bg, 0, cat)
    return np.where(err, cat, -1)


@dataclass(frozen=True)
class ErrorBreakdown:
    """Counts per class id of background / similar / dissimilar confusions."""

    counts: Dict[int, Tuple[int, int, int]]

    def __add__(self, other: "ErrorBreakdown") -> "ErrorBreakdown":
        out = dict(self.counts)
        for cid, c in other.counts.items():
            prev = out.get(cid, (0, 0, 0))
            out[cid] = tuple(a + b for a, b in zip(prev, c))
        return ErrorBreakdown(out)

    def proportions(self) -> Dict[int, Tuple[float, float, float]]:
        out = {}
        for cid, c in self.counts.items():
            total = sum(c)
            if total:
                out[cid] = tuple(x / total for x in c)
        return out

    def to_dict(self) -> dict:
        props = self.proportions()
        return {
            str(cid): {
                "count": sum(c),
                "counts": dict(zip(CATEGORIES, c)),
                "proportions": dict(zip(CATEGORIES, props[cid])) if cid in props else None,
            }
            for cid, c in sorted(self.counts.items())
        }


def error_breakdown(
    gt: np.ndarray,
    pred: np.ndarray,
    t: Taxonomy,
    exclude: Optional[np.ndarray] = None,
) -> ErrorBreakdown:
    """Tally confusion categories over error pixels, per ground-truth class.

    ``exclude`` masks pixels out of the tally (used to drop pixels that are
    already explained as mislocalisation).
    """
    cat = confusion_category_map(gt, pred, t)
    if exclude is not None:
        cat = np.where(exclude, -1, cat)
    gi = t.to_indices(gt)
    sel = cat >= 0
    n = t.num_classes
    tally = np.bincount(gi[sel] * 3 + cat[sel], minlength=n * 3).reshape(n, 3)
    counts = {
        t.class_ids[i]: tuple(int(x) for x in tally[i]) for i in range(n) if tally[i].any()
    }
    return ErrorBreakdown(counts)


def is_mislocalisation(
    gt: np.ndarray, pos: Tuple[int, int], pred_label: int, r: int
) -> bool:
    """True iff ``pred_label`` appears in gt within the (2r+1)^2 window at ``pos``."""
    gt = np.asarray(gt)
    h, w = gt.shape
    row, col = pos
    if not (0 <= row < h and 0 <= col < w):
        raise IndexError(f"position {pos} outside {gt.shape}")
    if r < 0:
        raise ValueError("radius must be non-negative")
    win = gt[max(0, row - r): row + r + 1, max(0, col - r): col + r + 1]
    return bool((win == pred_label).any())


def window_presence(mask: np.ndarray, r: int) -> np.ndarray:
    """For each pixel, whether ``mask`` has a True inside its clipped window."""
    h, w = mask.shape
    sat = np.zeros((h + 1, w + 1), dtype=np.int64)
    sat[1:, 1:] = mask.astype(np.int64).cumsum(0).cumsum(1)
    rows = np.arange(h)
    cols = np.arange(w)
    r0 = np.clip(rows - r, 0, h)[:, None]
    r1 = np.clip(rows + r + 1, 0, h)[:, None]
    c0 = np.clip(cols - r, 0, w)[None, :]
    c1 = np.clip(cols + r + 1, 0, w)[None, :]
    return (sat[r1, c1] - sat[r0, c1] - sat[r1, c0] + sat[r0, c0]) > 0


def mislocalisation_mask(gt: np.ndarray, pred: np.ndarray, t: Taxonomy, r: int) -> np.ndarray:
    """Error pixels (non-ignore GT) whose predicted label occurs in the GT window."""
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if gt.shape != pred.shape:
        raise ShapeMismatchError(f"{gt.shape} vs {pred.shape}")
    if r < 0:
        raise ValueError("radius must be non-negative")
    err = (gt != pred) & (gt != t.ignore_id)
    out = np.zeros(gt.shape, dtype=bool)
    if r == 0 or not err.any():
        return out
    for label in np.unique(pred[err]).tolist():
        sel = err & (pred == label)
        out |= sel & window_presence(gt == label, r)
    return out


@dataclass(frozen=True)
class MislocalisationGain:
    """Confusion matrices after crediting correctable pixels, one per radius."""

    radii: Tuple[int, ...]
    baseline: ConfusionMatrix
    corrected: Tuple[ConfusionMatrix, ...]

    def __add__(self, other: "MislocalisationGain") -> "MislocalisationGain":
        if self.radii != other.radii:
            raise ValueError("mislocalisation gains over different radii")
        return MislocalisationGain(
            self.radii,
            self.baseline + other.baseline,
            tuple(a + b for a, b in zip(self.corrected, other.corrected)),
        )

    def correctable(self, k: int) -> Dict[int, int]:
        """Pixels credited at radius index ``k``, by GT class id."""
        diff = np.diag(self.corrected[k].counts) - np.diag(self.baseline.counts)
        return {cid: int(d) for cid, d in zip(self.baseline.class_ids, diff) if d}

    def to_dict(self) -> dict:
        base = class_metrics(self.baseline)
        out = {"baseline": base.to_dict(), "radii": {}}
        for r, cm, k in zip(self.radii, self.corrected, range(len(self.radii))):
            m = class_metrics(cm)
            out["radii"][str(r)] = {
                "metrics": m.to_dict(),
                "correctable": {str(c): v for c, v in sorted(self.correctable(k).items())},
            }
        return out


def mislocalisation_gain(
    gt: np.ndarray,
    pred: np.ndarray,
    t: Taxonomy,
    radii: Sequence[int],
    exclude_background: bool = False,
) -> MislocalisationGain:
    """Re-score with every mislocalisation-correctable pixel moved to its GT class."""
    radii = tuple(int(r) for r in radii)
    if list(radii) != sorted(radii):
        raise ValueError("radii must be ascending")
    gi = t.to_indices(gt)
    pi = t.to_indices(pred)
    valid = gi >= 0
    if exclude_background and t.background_id is not None:
        valid &= gi != t.index_of(t.background_id)
    n = t.num_classes
    base = ConfusionMatrix(t.class_ids, confusion_from_indices(gi, pi, n, valid))
    corrected = []
    for r in radii:
        fix = mislocalisation_mask(gt, pred, t, r)
        eff = np.where(fix, gi, pi)
        corrected.append(ConfusionMatrix(t.class_ids, confusion_from_indices(gi, eff, n, valid)))
    return MislocalisationGain(radii, base, tuple(corrected))
