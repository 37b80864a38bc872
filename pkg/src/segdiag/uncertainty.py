"""Per-pixel uncertainty measures and the statistics built on them.

Both measures live in [0, 1], higher meaning less certain:

* relative entropy: Shannon entropy of the class distribution divided by
  ``log |C|`` (natural log; the base cancels),
* relative probability: second-largest over largest class probability.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .characteristics import group_stats
from .core import InstanceRecord, ShapeMismatchError, Taxonomy
from .errortax import CATEGORIES, confusion_category_map, mislocalisation_mask
from .ingest import NORM_TOL, write_scr1

__all__ = [
    "RELATIVE_ENTROPY",
    "RELATIVE_PROBABILITY",
    "MEASURES",
    "DEFAULT_DISTANCE_EDGES",
    "relative_entropy",
    "relative_probability",
    "uncertainty_map",
    "boundary_mask",
    "boundary_distance_map",
    "DistanceSamples",
    "distance_samples",
    "box_stats",
    "uncertainty_by_distance",
    "instance_mean_uncertainty",
    "uncertainty_by_category",
    "ErrorTypeSums",
    "uncertainty_by_error_type",
    "FgBgCounts",
    "fgbg_from_uncertainty",
    "dump_map",
]

RELATIVE_ENTROPY = "relative_entropy"
RELATIVE_PROBABILITY = "relative_probability"
MEASURES = (RELATIVE_ENTROPY, RELATIVE_PROBABILITY)
DEFAULT_DISTANCE_EDGES = (0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, math.inf)
ERROR_TYPES = ("instance", "misloc") + CATEGORIES


def _check_probs(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 0 or p.shape[-1] < 2:
        raise ValueError("need at least two classes")
    if (p < 0).any() or np.abs(p.sum(axis=-1) - 1.0).max() > NORM_TOL:
        raise ValueError("probabilities are not normalized")
    return p


def relative_entropy(p: np.ndarray) -> np.ndarray:
    """Normalized entropy over the last axis; 0 log 0 is taken as 0."""
    p = _check_probs(p)
    c = p.shape[-1]
    safe = np.where(p > 0, p, 1.0)
    plogp = np.where(p > 0, p * np.log(safe), 0.0).sum(axis=-1)
    out = plogp / math.log(1.0 / c)
    # + 0.0 turns the -0.0 of a one-hot vector into 0.0
    return np.clip(out, 0.0, 1.0) + 0.0


def relative_probability(p: np.ndarray) -> np.ndarray:
    """Ratio of the runner-up probability to the top one."""
    p = _check_probs(p)
    c = p.shape[-1]
    top2 = np.partition(p, (c - 2, c - 1), axis=-1)
    return np.clip(top2[..., c - 2] / top2[..., c - 1], 0.0, 1.0)


_MEASURE_FUNCS = {RELATIVE_ENTROPY: relative_entropy, RELATIVE_PROBABILITY: relative_probability}


def uncertainty_map(scores: np.ndarray, measure: str) -> np.ndarray:
    try:
        fn = _MEASURE_FUNCS[measure]
    except KeyError:
        raise ValueError(f"unknown uncertainty measure {measure!r}") from None
    scores = np.asarray(scores)
    if scores.ndim != 3:
        raise ValueError("scores must be H x W x C")
    return fn(scores)


def boundary_mask(gt: np.ndarray) -> np.ndarray:
    """Pixels with a 4-neighbour of a different label (ignore counts as a label)."""
    gt = np.asarray(gt)
    b = np.zeros(gt.shape, dtype=bool)
    dv = gt[1:, :] != gt[:-1, :]
    dh = gt[:, 1:] != gt[:, :-1]
    b[1:, :] |= dv
    b[:-1, :] |= dv
    b[:, 1:] |= dh
    b[:, :-1] |= dh
    return b


def boundary_distance_map(gt: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance to the nearest boundary pixel; +inf if none."""
    gt = np.asarray(gt)
    if gt.size == 0:
        raise ValueError("empty label map")
    b = boundary_mask(gt)
    if not b.any():
        return np.full(gt.shape, np.inf)
    return ndimage.distance_transform_edt(~b)


def _bin_of(d: np.ndarray, edges: Sequence[float]) -> np.ndarray:
    edges = np.asarray(edges, dtype=np.float64)
    if len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly ascending")
    k = np.searchsorted(edges, d, side="right") - 1
    # half-open [lo, hi); values outside every bin get -1
    return np.where((k >= 0) & (k < len(edges) - 1) & (d < edges[-1]), k, -1)


@dataclass
class DistanceSamples:
    """Uncertainty values pooled per distance bin; merge by concatenation."""

    edges: Tuple[float, ...]
    values: List[np.ndarray]

    def __add__(self, other: "DistanceSamples") -> "DistanceSamples":
        if self.edges != other.edges:
            raise ValueError("different distance bins")
        return DistanceSamples(
            self.edges, [np.concatenate([a, b]) for a, b in zip(self.values, other.values)]
        )

    def stats(self) -> List[dict]:
        out = []
        for k, v in enumerate(self.values):
            if v.size == 0:
                continue
            entry = {"lo": self.edges[k], "hi": self.edges[k + 1]}
            entry.update(box_stats(v))
            out.append(entry)
        return out


def distance_samples(
    umap: np.ndarray,
    dmap: np.ndarray,
    edges: Sequence[float] = DEFAULT_DISTANCE_EDGES,
    mask: Optional[np.ndarray] = None,
) -> DistanceSamples:
    umap = np.asarray(umap)
    dmap = np.asarray(dmap)
    if umap.shape != dmap.shape:
        raise ShapeMismatchError(f"{umap.shape} vs {dmap.shape}")
    k = _bin_of(dmap, edges)
    if mask is not None:
        k = np.where(mask, k, -1)
    values = [np.sort(umap[k == i]) for i in range(len(edges) - 1)]
    return DistanceSamples(tuple(float(e) for e in edges), values)


def box_stats(values: np.ndarray) -> dict:
    """Quartiles with linear interpolation between order statistics."""
    v = np.asarray(values, dtype=np.float64)
    p25, med, p75 = np.percentile(v, [25, 50, 75])
    return {"count": int(v.size), "p25": float(p25), "median": float(med), "p75": float(p75)}


def uncertainty_by_distance(
    umap: np.ndarray,
    dmap: np.ndarray,
    bin_edges: Sequence[float] = DEFAULT_DISTANCE_EDGES,
    mask: Optional[np.ndarray] = None,
) -> List[dict]:
    """Box-plot statistics per distance bin; empty bins are left out."""
    return distance_samples(umap, dmap, bin_edges, mask).stats()


def instance_mean_uncertainty(
    rec: InstanceRecord, umap: np.ndarray, inst: np.ndarray
) -> float:
    r0, c0, r1, c1 = rec.bbox
    sl = (slice(r0, r1 + 1), slice(c0, c1 + 1))
    m = np.asarray(inst)[sl] == rec.instance_id
    return float(np.asarray(umap)[sl][m].mean())


def uncertainty_by_category(
    records: Sequence[InstanceRecord],
    umap: Optional[np.ndarray] = None,
    inst: Optional[np.ndarray] = None,
    values: Optional[Sequence[float]] = None,
) -> Dict[str, Dict[int, dict]]:
    """Mean and standard error of per-instance mean uncertainty, by bin.

    Pass either a single image's ``umap`` and ``inst`` or precomputed
    per-instance ``values`` (one per record, possibly from many images).
    """
    if values is None:
        if umap is None or inst is None:
            raise ValueError("need umap and inst, or values")
        values = [instance_mean_uncertainty(r, umap, inst) for r in records]
    return {
        "size": group_stats(records, values, "size"),
        "aspect": group_stats(records, values, "aspect"),
    }


@dataclass(frozen=True)
class ErrorTypeSums:
    """Running (sum, count) per error type so images merge exactly."""

    sums: Tuple[float, ...] = (0.0,) * len(ERROR_TYPES)
    counts: Tuple[int, ...] = (0,) * len(ERROR_TYPES)

    def __add__(self, other: "ErrorTypeSums") -> "ErrorTypeSums":
        return ErrorTypeSums(
            tuple(a + b for a, b in zip(self.sums, other.sums)),
            tuple(a + b for a, b in zip(self.counts, other.counts)),
        )

    def means(self) -> Dict[str, float]:
        return {
            name: s / n for name, s, n in zip(ERROR_TYPES, self.sums, self.counts) if n
        }

    def to_dict(self) -> dict:
        m = self.means()
        return {
            name: {"count": n, "mean": m.get(name)} for name, n in zip(ERROR_TYPES, self.counts)
        }


def uncertainty_by_error_type(
    gt: np.ndarray,
    pred: np.ndarray,
    umap: np.ndarray,
    t: Taxonomy,
    misloc_radius: int,
    inst: Optional[np.ndarray] = None,
) -> ErrorTypeSums:
    """Uncertainty summed over instance pixels and over each error category.

    The instance baseline covers non-ignore pixels inside annotated
    instances, or all non-background GT pixels when no instance map is
    given. Error pixels follow the confusion taxonomy (background GT
    excluded); ``misloc`` is independent of it.
    """
    gt = np.asarray(gt)
    umap = np.asarray(umap, dtype=np.float64)
    if umap.shape != gt.shape:
        raise ShapeMismatchError(f"{umap.shape} vs {gt.shape}")
    valid = gt != t.ignore_id
    if inst is not None:
        base = valid & (np.asarray(inst) != 0)
    else:
        base = valid
        if t.background_id is not None:
            base = base & (gt != t.background_id)
    cat = confusion_category_map(gt, pred, t)
    misloc = mislocalisation_mask(gt, pred, t, misloc_radius) & (cat >= 0)
    masks = [base, misloc] + [cat == k for k in range(len(CATEGORIES))]
    sums = tuple(float(umap[m].sum()) for m in masks)
    counts = tuple(int(m.sum()) for m in masks)
    return ErrorTypeSums(sums, counts)


@dataclass(frozen=True)
class FgBgCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __add__(self, other: "FgBgCounts") -> "FgBgCounts":
        return FgBgCounts(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def precision(self) -> Optional[float]:
        d = self.tp + self.fp
        return self.tp / d if d else None

    @property
    def recall(self) -> Optional[float]:
        d = self.tp + self.fn
        return self.tp / d if d else None

    @property
    def accuracy(self) -> Optional[float]:
        return (self.tp + self.tn) / self.total if self.total else None

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "count": self.total,
            "precision": self.precision,
            "recall": self.recall,
            "accuracy": self.accuracy,
        }


def fgbg_from_uncertainty(umap: np.ndarray, gt: np.ndarray, t: Taxonomy) -> FgBgCounts:
    """Foreground = uncertainty above the image mean, scored on non-ignore pixels."""
    if t.background_id is None:
        raise ValueError("foreground/background split needs a background class")
    umap = np.asarray(umap, dtype=np.float64)
    gt = np.asarray(gt)
    if umap.shape != gt.shape:
        raise ShapeMismatchError(f"{umap.shape} vs {gt.shape}")
    valid = gt != t.ignore_id
    if not valid.any():
        raise ValueError("every ground-truth pixel is ignored")
    fg_pred = umap > umap.mean()
    fg_gt = gt != t.background_id
    return FgBgCounts(
        tp=int((valid & fg_pred & fg_gt).sum()),
        fp=int((valid & fg_pred & ~fg_gt).sum()),
        tn=int((valid & ~fg_pred & ~fg_gt).sum()),
        fn=int((valid & ~fg_pred & fg_gt).sum()),
    )


def dump_map(path, values: np.ndarray) -> None:
    """Save an uncertainty or distance map as a one-channel SCR1 file."""
    v = np.asarray(values, dtype=np.float32)
    if v.ndim != 2:
        raise ValueError("expected a 2-D map")
    write_scr1(path, v[..., None])
