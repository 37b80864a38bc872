"""Size / aspect-ratio percentile bins and per-bin statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import ASPECT_BINS, SIZE_BINS, InstanceRecord

__all__ = [
    "PERCENTILES",
    "BinScheme",
    "MissingClassError",
    "nearest_rank",
    "fit_bins",
    "assign_bins",
    "bin_index",
    "BinStat",
    "group_stats",
    "sensitivity",
    "category_distribution",
]

PERCENTILES = (10, 30, 70, 90)
GLOBAL = "global"
PER_CLASS = "per-class"


class MissingClassError(KeyError):
    pass


def nearest_rank(sorted_values: Sequence[float], k: int) -> float:
    """P_k = sorted[ceil(k/100 * n)] with 1-based ranks."""
    n = len(sorted_values)
    rank = max(1, -(-k * n // 100))
    return sorted_values[rank - 1]


@dataclass(frozen=True)
class BinScheme:
    """Four thresholds (P10, P30, P70, P90) per class for size and aspect.

    In global scope both tables hold a single entry under key ``None``.
    """

    size: Dict[Optional[int], Tuple[float, float, float, float]]
    aspect: Dict[Optional[int], Tuple[float, float, float, float]]
    scope: str = PER_CLASS
    method: str = "nearest-rank"
    missing: Tuple[int, ...] = ()

    def thresholds(self, class_id: int) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
        key = None if self.scope == GLOBAL else class_id
        if key not in self.size:
            raise MissingClassError(f"no bins fitted for class {class_id}")
        return self.size[key], self.aspect[key]

    def to_dict(self) -> dict:
        def enc(table):
            return {("*" if k is None else str(k)): list(v) for k, v in sorted(
                table.items(), key=lambda kv: -1 if kv[0] is None else kv[0])}

        return {
            "scope": self.scope,
            "method": self.method,
            "percentiles": list(PERCENTILES),
            "size": enc(self.size),
            "aspect": enc(self.aspect),
            "missing": list(self.missing),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "BinScheme":
        def dec(table):
            return {(None if k == "*" else int(k)): tuple(float(x) for x in v)
                    for k, v in table.items()}

        return cls(
            size=dec(d["size"]),
            aspect=dec(d["aspect"]),
            scope=d.get("scope", PER_CLASS),
            method=d.get("method", "nearest-rank"),
            missing=tuple(d.get("missing", ())),
        )


def fit_bins(
    records: Iterable[InstanceRecord],
    scope: str = PER_CLASS,
    classes: Optional[Iterable[int]] = None,
) -> BinScheme:
    """Fit nearest-rank thresholds; classes in ``classes`` with no instances
    are left out and listed in ``missing``."""
    if scope not in (PER_CLASS, GLOBAL):
        raise ValueError(f"unknown bin scope {scope!r}")
    groups: Dict[Optional[int], List[InstanceRecord]] = {}
    for r in records:
        groups.setdefault(None if scope == GLOBAL else r.class_id, []).append(r)
    size, aspect = {}, {}
    for key, recs in groups.items():
        sizes = sorted(float(r.pixel_count) for r in recs)
        ratios = sorted(r.aspect_ratio for r in recs)
        size[key] = tuple(nearest_rank(sizes, k) for k in PERCENTILES)
        aspect[key] = tuple(nearest_rank(ratios, k) for k in PERCENTILES)
    missing = ()
    if classes is not None and scope == PER_CLASS:
        missing = tuple(sorted(c for c in classes if c not in groups))
    return BinScheme(size=size, aspect=aspect, scope=scope, missing=missing)


def bin_index(value: float, thresholds: Sequence[float]) -> int:
    # closed upper boundaries: v <= P10 -> 0, P10 < v <= P30 -> 1, ...
    for i, th in enumerate(thresholds):
        if value <= th:
            return i
    return len(thresholds)


def assign_bins(rec: InstanceRecord, scheme: BinScheme) -> InstanceRecord:
    size_th, aspect_th = scheme.thresholds(rec.class_id)
    return rec.with_bins(
        SIZE_BINS[bin_index(rec.pixel_count, size_th)],
        ASPECT_BINS[bin_index(rec.aspect_ratio, aspect_th)],
    )


@dataclass(frozen=True)
class BinStat:
    count: int
    mean: Optional[float]
    stderr: Optional[float]

    def to_dict(self) -> dict:
        return {"count": self.count, "mean": self.mean, "stderr": self.stderr}


def _stat(values: Sequence[float]) -> BinStat:
    n = len(values)
    if n == 0:
        return BinStat(0, None, None)
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    stderr = float(arr.std(ddof=1) / math.sqrt(n)) if n >= 2 else None
    return BinStat(n, mean, stderr)


def group_stats(
    records: Sequence[InstanceRecord], values: Sequence[float], attribute: str
) -> Dict[int, dict]:
    """Per class: a :class:`BinStat` for each bin of ``attribute`` plus overall."""
    if len(records) != len(values):
        raise ValueError("one value per record is required")
    if attribute == "size":
        names, key = SIZE_BINS, "size_bin"
    elif attribute == "aspect":
        names, key = ASPECT_BINS, "aspect_bin"
    else:
        raise ValueError(f"attribute must be 'size' or 'aspect', got {attribute!r}")
    per_class: Dict[int, Dict[str, List[float]]] = {}
    for rec, v in zip(records, values):
        b = getattr(rec, key)
        if b is None:
            raise ValueError(f"instance {rec.instance_id} of {rec.image_id!r} has no bins")
        per_class.setdefault(rec.class_id, {n: [] for n in names})[b].append(float(v))
    out = {}
    for cid in sorted(per_class):
        bins = per_class[cid]
        everything = [v for n in names for v in bins[n]]
        out[cid] = {
            "bins": {n: _stat(bins[n]) for n in names},
            "overall": _stat(everything),
        }
    return out


def sensitivity(
    records: Sequence[InstanceRecord], accuracies: Sequence[float]
) -> Dict[str, Dict[int, dict]]:
    """Mean per-instance accuracy with standard errors, by size and aspect bin."""
    return {
        "size": group_stats(records, accuracies, "size"),
        "aspect": group_stats(records, accuracies, "aspect"),
    }


def category_distribution(records: Iterable[InstanceRecord]) -> Dict[int, dict]:
    """Per class 5 x 5 counts, rows = size bins, columns = aspect bins."""
    hist: Dict[int, np.ndarray] = {}
    for r in records:
        if r.size_bin is None or r.aspect_bin is None:
            raise ValueError(f"instance {r.instance_id} of {r.image_id!r} has no bins")
        h = hist.setdefault(r.class_id, np.zeros((5, 5), dtype=np.int64))
        h[SIZE_BINS.index(r.size_bin), ASPECT_BINS.index(r.aspect_bin)] += 1
    return {
        cid: {
            "counts": hist[cid],
            "size_marginal": hist[cid].sum(axis=1),
            "aspect_marginal": hist[cid].sum(axis=0),
            "count": int(hist[cid].sum()),
        }
        for cid in sorted(hist)
    }
