"""Domain types shared by every analysis: taxonomy, confusion counts, instances.

Label maps and instance maps are plain 2-D numpy integer arrays holding class
ids (not indices). A :class:`Taxonomy` translates ids to dense indices for
the confusion matrix.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

__all__ = [
    "TaxonomyError",
    "DuplicateClassError",
    "UnknownGroupMemberError",
    "OverlappingGroupsError",
    "BackgroundInGroupError",
    "LabelError",
    "ShapeMismatchError",
    "Taxonomy",
    "validate_taxonomy",
    "ConfusionMatrix",
    "accumulate_confusion",
    "InstanceRecord",
    "extract_instances",
    "SIZE_BINS",
    "ASPECT_BINS",
]

SIZE_BINS = ("XS", "S", "M", "L", "XL")
ASPECT_BINS = ("XT", "T", "M", "W", "XW")


class TaxonomyError(ValueError):
    pass


class DuplicateClassError(TaxonomyError):
    pass


class UnknownGroupMemberError(TaxonomyError):
    pass


class OverlappingGroupsError(TaxonomyError):
    pass


class BackgroundInGroupError(TaxonomyError):
    pass


class LabelError(ValueError):
    """A label map holds a value that is neither a known class nor ignore."""


class ShapeMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Taxonomy:
    """Class list, optional background, ignore id and semantic groups.

    ``groups`` maps a group name to the class ids it contains. Construct
    through :func:`validate_taxonomy` (or :meth:`from_dict`) to get the
    invariants checked.
    """

    classes: Tuple[Tuple[int, str], ...]
    ignore_id: int = 255
    background_id: Optional[int] = None
    groups: Mapping[str, Tuple[int, ...]] = field(default_factory=dict)

    @property
    def class_ids(self) -> Tuple[int, ...]:
        return tuple(cid for cid, _ in self.classes)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def name_of(self, class_id: int) -> str:
        for cid, name in self.classes:
            if cid == class_id:
                return name
        raise KeyError(class_id)

    def id_of(self, name: str) -> int:
        for cid, n in self.classes:
            if n == name:
                return cid
        raise KeyError(name)

    def index_of(self, class_id: int) -> int:
        return self.class_ids.index(class_id)

    def group_of(self, class_id: int) -> Optional[str]:
        for name, members in self.groups.items():
            if class_id in members:
                return name
        return None

    def lookup_table(self, size: Optional[int] = None) -> np.ndarray:
        """Array mapping label value -> class index; -1 for ignore, -2 unknown."""
        top = max(max(self.class_ids, default=0), self.ignore_id) + 1
        size = max(size or 0, top)
        lut = np.full(size, -2, dtype=np.int64)
        lut[self.ignore_id] = -1
        for idx, cid in enumerate(self.class_ids):
            lut[cid] = idx
        return lut

    def to_indices(self, labels: np.ndarray, allow_ignore: bool = True) -> np.ndarray:
        """Convert a label map of class ids into dense indices (-1 = ignore)."""
        labels = np.asarray(labels)
        if labels.size == 0:
            return labels.astype(np.int64)
        if labels.min() < 0:
            raise LabelError(f"negative label value {int(labels.min())}")
        lut = self.lookup_table(int(labels.max()) + 1)
        idx = lut[labels]
        bad = idx == -2
        if not allow_ignore:
            bad |= idx == -1
        if bad.any():
            vals = sorted(set(np.unique(labels[bad]).tolist()))
            raise LabelError(f"label values not in taxonomy: {vals[:10]}")
        return idx

    def group_index_array(self) -> np.ndarray:
        """Per class index: group number, or -1 for ungrouped classes."""
        out = np.full(self.num_classes, -1, dtype=np.int64)
        for g, name in enumerate(sorted(self.groups)):
            for cid in self.groups[name]:
                out[self.index_of(cid)] = g
        return out

    def to_dict(self) -> dict:
        d = {
            "classes": [{"id": cid, "name": name} for cid, name in self.classes],
            "ignore_id": self.ignore_id,
            "groups": {k: list(v) for k, v in sorted(self.groups.items())},
        }
        if self.background_id is not None:
            d["background_id"] = self.background_id
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Taxonomy":
        t = cls(
            classes=tuple((int(c["id"]), str(c["name"])) for c in d["classes"]),
            ignore_id=int(d.get("ignore_id", 255)),
            background_id=None if d.get("background_id") is None else int(d["background_id"]),
            groups={str(k): tuple(int(x) for x in v) for k, v in (d.get("groups") or {}).items()},
        )
        return validate_taxonomy(t)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def validate_taxonomy(t: Taxonomy) -> Taxonomy:
    """Return ``t`` unchanged if its invariants hold, else raise."""
    ids = [cid for cid, _ in t.classes]
    seen = set()
    for cid in ids:
        if cid < 0:
            raise TaxonomyError(f"class id {cid} is negative")
        if cid in seen:
            raise DuplicateClassError(f"duplicate class id {cid}")
        seen.add(cid)
    if t.ignore_id in seen:
        raise TaxonomyError(f"ignore id {t.ignore_id} is also a class id")
    if t.background_id is not None and t.background_id not in seen:
        raise TaxonomyError(f"background id {t.background_id} is not a class")
    owner: Dict[int, str] = {}
    for name, members in t.groups.items():
        for cid in members:
            if cid not in seen:
                raise UnknownGroupMemberError(f"group {name!r}: {cid} is not a class")
            if cid == t.background_id:
                raise BackgroundInGroupError(f"group {name!r} contains the background class")
            if cid in owner and owner[cid] != name:
                raise OverlappingGroupsError(
                    f"class {cid} is in both {owner[cid]!r} and {name!r}"
                )
            owner[cid] = name
    return t


def _check_same_shape(*arrays: np.ndarray) -> None:
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise ShapeMismatchError(f"shape mismatch: {sorted(shapes)}")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Pixel counts; entry (i, j) = ground truth class i predicted as class j.

    Rows and columns follow ``class_ids`` order. Matrices over the same class
    list add elementwise, with :meth:`zeros` as the identity.
    """

    class_ids: Tuple[int, ...]
    counts: np.ndarray

    @classmethod
    def zeros(cls, class_ids: Sequence[int]) -> "ConfusionMatrix":
        n = len(class_ids)
        return cls(tuple(class_ids), np.zeros((n, n), dtype=np.int64))

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.class_ids != other.class_ids:
            raise ValueError("confusion matrices over different class lists")
        return ConfusionMatrix(self.class_ids, self.counts + other.counts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.class_ids == other.class_ids and np.array_equal(self.counts, other.counts)

    @property
    def gt_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def pred_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def entries(self) -> List[List[int]]:
        """Nonzero cells as ``[gt_id, pred_id, count]`` rows."""
        rows = []
        for i, j in zip(*np.nonzero(self.counts)):
            rows.append([self.class_ids[i], self.class_ids[j], int(self.counts[i, j])])
        return rows


def confusion_from_indices(
    gt_idx: np.ndarray, pred_idx: np.ndarray, n: int, mask: Optional[np.ndarray] = None
) -> np.ndarray:
    keep = gt_idx >= 0
    if mask is not None:
        keep &= mask
    flat = gt_idx[keep] * n + pred_idx[keep]
    return np.bincount(flat, minlength=n * n).reshape(n, n).astype(np.int64)


def accumulate_confusion(
    gt: np.ndarray,
    pred: np.ndarray,
    t: Taxonomy,
    exclude_background: bool = False,
) -> ConfusionMatrix:
    """Count (gt, pred) class pairs over the non-ignore pixels of one image.

    With ``exclude_background`` set, pixels whose ground truth is the
    background class are skipped too (VOC "non-background pixels" mode).
    """
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    _check_same_shape(gt, pred)
    gt_idx = t.to_indices(gt)
    pred_idx = t.to_indices(pred)
    valid = gt_idx >= 0
    if (pred_idx[valid] < 0).any():
        raise LabelError("prediction holds the ignore id at an evaluated pixel")
    if exclude_background and t.background_id is not None:
        valid &= gt_idx != t.index_of(t.background_id)
    counts = confusion_from_indices(gt_idx, pred_idx, t.num_classes, valid)
    return ConfusionMatrix(t.class_ids, counts)


@dataclass(frozen=True)
class InstanceRecord:
    instance_id: int
    class_id: int
    pixel_count: int
    bbox: Tuple[int, int, int, int]  # row_min, col_min, row_max, col_max (inclusive)
    aspect_ratio: float
    image_id: str = ""
    size_bin: Optional[str] = None
    aspect_bin: Optional[str] = None

    @property
    def bbox_height(self) -> int:
        return self.bbox[2] - self.bbox[0] + 1

    @property
    def bbox_width(self) -> int:
        return self.bbox[3] - self.bbox[1] + 1

    def with_bins(self, size_bin: str, aspect_bin: str) -> "InstanceRecord":
        return replace(self, size_bin=size_bin, aspect_bin=aspect_bin)

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "instance_id": self.instance_id,
            "class_id": self.class_id,
            "pixel_count": self.pixel_count,
            "bbox": list(self.bbox),
            "aspect_ratio": self.aspect_ratio,
            "size_bin": self.size_bin,
            "aspect_bin": self.aspect_bin,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "InstanceRecord":
        return cls(
            instance_id=int(d["instance_id"]),
            class_id=int(d["class_id"]),
            pixel_count=int(d["pixel_count"]),
            bbox=tuple(int(x) for x in d["bbox"]),
            aspect_ratio=float(d["aspect_ratio"]),
            image_id=str(d.get("image_id", "")),
            size_bin=d.get("size_bin"),
            aspect_bin=d.get("aspect_bin"),
        )


def extract_instances(
    inst: np.ndarray,
    gt: np.ndarray,
    t: Taxonomy,
    image_id: str = "",
    class_overrides: Optional[Mapping[int, int]] = None,
) -> List[InstanceRecord]:
    """One record per nonzero instance id, bins left unassigned.

    The class is the majority ground-truth label over the instance's
    non-ignore pixels (ties go to the smaller class id) unless
    ``class_overrides`` names it explicitly.
    """
    inst = np.asarray(inst)
    gt = np.asarray(gt)
    _check_same_shape(inst, gt)
    if inst.size == 0 or not inst.any():
        return []
    if inst.min() < 0:
        raise ValueError("instance ids must be non-negative")
    ids = np.unique(inst)
    ids = ids[ids != 0]
    gt_idx = t.to_indices(gt)
    n = t.num_classes

    # dense instance numbering so bincount stays small
    dense = np.searchsorted(ids, inst)
    on = inst != 0
    pixel_counts = np.bincount(dense[on], minlength=len(ids))
    voting = on & (gt_idx >= 0)
    votes = np.bincount(
        dense[voting] * n + gt_idx[voting], minlength=len(ids) * n
    ).reshape(len(ids), n)
    # argmax over classes sorted by id gives the smaller id on ties
    order = np.argsort(np.asarray(t.class_ids), kind="stable")
    objects = ndimage.find_objects(np.where(on, dense + 1, 0))

    overrides = dict(class_overrides or {})
    records = []
    for k, iid in enumerate(ids.tolist()):
        if iid in overrides:
            class_id = int(overrides[iid])
            t.index_of(class_id)
        else:
            if votes[k].sum() == 0:
                raise LabelError(f"instance {iid} covers only ignore pixels")
            class_id = t.class_ids[order[np.argmax(votes[k][order])]]
        sl = objects[k]
        r0, r1 = sl[0].start, sl[0].stop - 1
        c0, c1 = sl[1].start, sl[1].stop - 1
        records.append(
            InstanceRecord(
                instance_id=int(iid),
                class_id=int(class_id),
                pixel_count=int(pixel_counts[k]),
                bbox=(int(r0), int(c0), int(r1), int(c1)),
                aspect_ratio=(c1 - c0 + 1) / (r1 - r0 + 1),
                image_id=image_id,
            )
        )
    return records
