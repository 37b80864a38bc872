"""Synthetic scenes with analytically known diagnostics.

A scene is a background canvas with non-overlapping rectangular instances
and a list of injected prediction errors. Every expected number is derived
from the rectangle geometry and the score model, not by scanning the
rendered maps, so the scene doubles as an oracle for the whole pipeline.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import ASPECT_BINS, SIZE_BINS, Taxonomy, validate_taxonomy
from .ingest import (
    PROBABILITIES,
    save_instance_png,
    save_label_png,
    save_manifest,
    save_taxonomy,
    write_scr1,
)

__all__ = [
    "SHIFT",
    "GROUP_SWAP",
    "BACKGROUND_SWALLOW",
    "DISSIMILAR_SWAP",
    "ERROR_KINDS",
    "SceneError",
    "InstanceSpec",
    "ErrorSpec",
    "ScoreModel",
    "SceneSpec",
    "Scene",
    "scene_taxonomy",
    "generate",
    "random_scene_spec",
    "write_scene",
    "compare_fragment",
]

SHIFT = "shift"
GROUP_SWAP = "group_swap"
BACKGROUND_SWALLOW = "background_swallow"
DISSIMILAR_SWAP = "dissimilar_swap"
ERROR_KINDS = (SHIFT, GROUP_SWAP, BACKGROUND_SWALLOW, DISSIMILAR_SWAP)
BACKGROUND = 0
IGNORE = 255
DEFAULT_RADII = (0, 1, 2, 3, 4, 5, 10)
MISLOC_RADIUS = 5


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class InstanceSpec:
    class_id: int
    top: int
    left: int
    height: int
    width: int

    @property
    def bottom(self) -> int:
        return self.top + self.height - 1

    @property
    def right(self) -> int:
        return self.left + self.width - 1

    @property
    def area(self) -> int:
        return self.height * self.width


@dataclass(frozen=True)
class ErrorSpec:
    kind: str
    instance: int
    dx: int = 0
    dy: int = 0
    target: Optional[int] = None


@dataclass(frozen=True)
class ScoreModel:
    """Correct pixels put ``correct_confidence`` on their label and share the
    rest evenly. Error pixels split the top mass between predicted and GT
    label, the predicted one ahead by ``error_gap`` (0 gives an exact tie)."""

    correct_confidence: float = 0.9
    error_gap: float = 0.2


@dataclass(frozen=True)
class SceneSpec:
    height: int
    width: int
    num_classes: int
    instances: Tuple[InstanceSpec, ...]
    errors: Tuple[ErrorSpec, ...] = ()
    groups: Dict[str, Tuple[int, ...]] = field(default_factory=dict)
    score_model: ScoreModel = ScoreModel()
    seed: int = 0
    radii: Tuple[int, ...] = DEFAULT_RADII

    def to_dict(self) -> dict:
        d = asdict(self)
        d["groups"] = {k: list(v) for k, v in self.groups.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(
            height=int(d["height"]),
            width=int(d["width"]),
            num_classes=int(d["num_classes"]),
            instances=tuple(InstanceSpec(**i) for i in d["instances"]),
            errors=tuple(ErrorSpec(**e) for e in d.get("errors", ())),
            groups={k: tuple(v) for k, v in d.get("groups", {}).items()},
            score_model=ScoreModel(**d.get("score_model", {})),
            seed=int(d.get("seed", 0)),
            radii=tuple(d.get("radii", DEFAULT_RADII)),
        )


@dataclass
class Scene:
    spec: SceneSpec
    taxonomy: Taxonomy
    gt: np.ndarray
    instances: np.ndarray
    pred: np.ndarray
    scores: np.ndarray
    image: np.ndarray
    expected: dict


def scene_taxonomy(spec: SceneSpec) -> Taxonomy:
    classes = ((BACKGROUND, "background"),) + tuple(
        (k, f"class{k}") for k in range(1, spec.num_classes)
    )
    return validate_taxonomy(
        Taxonomy(classes, ignore_id=IGNORE, background_id=BACKGROUND, groups=dict(spec.groups))
    )


def _overlaps(a: Tuple[int, int, int, int], b: Tuple[int, int, int, int], gap: int = 0) -> bool:
    return not (
        a[2] + gap < b[0] or b[2] + gap < a[0] or a[3] + gap < b[1] or b[3] + gap < a[1]
    )


def _rect(i: InstanceSpec, dy: int = 0, dx: int = 0) -> Tuple[int, int, int, int]:
    return (i.top + dy, i.left + dx, i.bottom + dy, i.right + dx)


def _validate(spec: SceneSpec, t: Taxonomy) -> Dict[int, ErrorSpec]:
    h, w = spec.height, spec.width
    rects = [_rect(i) for i in spec.instances]
    for k, (inst, r) in enumerate(zip(spec.instances, rects)):
        if inst.class_id in (BACKGROUND,) or not 0 < inst.class_id < spec.num_classes:
            raise SceneError(f"instance {k}: class {inst.class_id} is not a foreground class")
        if inst.height < 1 or inst.width < 1:
            raise SceneError(f"instance {k}: empty rectangle")
        if r[0] < 1 or r[1] < 1 or r[2] > h - 2 or r[3] > w - 2:
            raise SceneError(f"instance {k}: needs a one-pixel background border")
        for j in range(k):
            if _overlaps(r, rects[j], gap=1):
                raise SceneError(f"instances {j} and {k} overlap or touch")
    errors: Dict[int, ErrorSpec] = {}
    for e in spec.errors:
        if not 0 <= e.instance < len(spec.instances):
            raise SceneError(f"error references missing instance {e.instance}")
        if e.instance in errors:
            raise SceneError(f"instance {e.instance} has more than one injected error")
        if e.kind not in ERROR_KINDS:
            raise SceneError(f"unknown error kind {e.kind!r}")
        errors[e.instance] = _resolve_target(e, spec.instances[e.instance].class_id, t)
    shifted = {}
    for k, e in errors.items():
        if e.kind != SHIFT:
            continue
        if e.dx == 0 and e.dy == 0:
            raise SceneError(f"instance {k}: zero shift")
        r = _rect(spec.instances[k], e.dy, e.dx)
        if r[0] < 0 or r[1] < 0 or r[2] > h - 1 or r[3] > w - 1:
            raise SceneError(f"instance {k}: shifted rectangle leaves the image")
        for j, other in enumerate(rects):
            if j != k and _overlaps(r, other):
                raise SceneError(f"instance {k}: shift runs into instance {j}")
        for j, other in shifted.items():
            if _overlaps(r, other):
                raise SceneError(f"instances {j} and {k}: shifted predictions collide")
        shifted[k] = r
    return errors


def _resolve_target(e: ErrorSpec, cls: int, t: Taxonomy) -> ErrorSpec:
    if e.kind == GROUP_SWAP:
        group = t.group_of(cls)
        if group is None:
            raise SceneError(f"group_swap on ungrouped class {cls}")
        mates = [c for c in sorted(t.groups[group]) if c != cls]
        if not mates:
            raise SceneError(f"class {cls} has no group mate")
        target = mates[0] if e.target is None else e.target
        if target not in mates:
            raise SceneError(f"{target} is not a group mate of {cls}")
        return ErrorSpec(e.kind, e.instance, target=target)
    if e.kind == DISSIMILAR_SWAP:
        g = t.group_of(cls)
        options = [
            c for c in t.class_ids
            if c not in (cls, BACKGROUND) and (g is None or t.group_of(c) != g)
        ]
        target = options[0] if e.target is None else e.target
        if target not in options:
            raise SceneError(f"{target} is not dissimilar to {cls}")
        return ErrorSpec(e.kind, e.instance, target=target)
    return e


def _cheb_to_rect(y: int, x: int, r: Tuple[int, int, int, int]) -> int:
    dy = max(r[0] - y, 0, y - r[2])
    dx = max(r[1] - x, 0, x - r[3])
    return max(dy, dx)


def _cheb_to_outside(y: int, x: int, r: Tuple[int, int, int, int]) -> int:
    # every rectangle has background on all four sides (validated)
    return min(y - r[0] + 1, r[2] - y + 1, x - r[1] + 1, r[3] - x + 1)


def _expected_bins(values: Sequence[float]) -> List[int]:
    """Bin each value by counting how many values rank at or below it.

    Equivalent to nearest-rank thresholds at P10/P30/P70/P90, written as
    rank arithmetic so it does not share code with the fitted scheme.
    """
    n = len(values)
    cuts = [max(1, -(-p * n // 100)) for p in (10, 30, 70, 90)]
    ordered = sorted(values)
    th = [ordered[c - 1] for c in cuts]
    return [sum(v > x for x in th) for v in values]


def _score_levels(C: int, model: ScoreModel) -> dict:
    conf = model.correct_confidence
    gap = model.error_gap
    rest = (1.0 - conf) / (C - 1)
    mass = conf + rest
    top = (mass + gap) / 2
    second = (mass - gap) / 2
    if not (gap >= 0 and conf > rest and second > rest and second > 0):
        raise SceneError("score model does not keep the GT class as runner-up on errors")
    f32 = lambda v: float(np.float32(v))  # noqa: E731
    return {"conf": f32(conf), "rest": f32(rest), "top": f32(top), "second": f32(second)}


def _entropy_terms(values: Sequence[Tuple[float, int]], C: int) -> float:
    s = sum(k * (v * math.log(v)) for v, k in values if v > 0)
    return min(max(s / math.log(1.0 / C), 0.0), 1.0)


def generate(spec: SceneSpec) -> Scene:
    t = scene_taxonomy(spec)
    errors = _validate(spec, t)
    H, W, C = spec.height, spec.width, spec.num_classes

    gt = np.zeros((H, W), dtype=np.int64)
    inst = np.zeros((H, W), dtype=np.int64)
    for k, i in enumerate(spec.instances):
        gt[i.top: i.bottom + 1, i.left: i.right + 1] = i.class_id
        inst[i.top: i.bottom + 1, i.left: i.right + 1] = k + 1
    pred = gt.copy()
    for k, e in errors.items():
        i = spec.instances[k]
        body = (slice(i.top, i.bottom + 1), slice(i.left, i.right + 1))
        if e.kind == SHIFT:
            pred[body] = BACKGROUND
        elif e.kind == BACKGROUND_SWALLOW:
            pred[body] = BACKGROUND
        else:
            pred[body] = e.target
    for k, e in errors.items():
        if e.kind == SHIFT:
            r = _rect(spec.instances[k], e.dy, e.dx)
            pred[r[0]: r[2] + 1, r[1]: r[3] + 1] = spec.instances[k].class_id

    lv = _score_levels(C, spec.score_model)
    scores = np.full((H, W, C), lv["rest"], dtype=np.float64)
    ids = np.arange(C)
    wrong = pred != gt
    onehot_pred = ids == pred[..., None]
    onehot_gt = ids == gt[..., None]
    scores[onehot_pred & ~wrong[..., None]] = lv["conf"]
    scores[onehot_pred & wrong[..., None]] = lv["top"]
    scores[onehot_gt & wrong[..., None]] = lv["second"]

    rng = np.random.default_rng(spec.seed)
    palette = rng.integers(0, 256, size=(C, 3))
    image = np.clip(palette[gt] + rng.normal(0, 8, size=(H, W, 3)), 0, 255).astype(np.uint8)

    expected = _expected_fragment(spec, t, errors, lv)
    return Scene(spec, t, gt, inst, pred, scores, image, expected)


def _expected_fragment(spec: SceneSpec, t: Taxonomy, errors: Dict[int, ErrorSpec], lv: dict) -> dict:
    C = spec.num_classes
    confusion: Dict[Tuple[int, int], int] = {}

    def add(g: int, p: int, n: int) -> None:
        if n:
            confusion[(g, p)] = confusion.get((g, p), 0) + n

    rects_by_class: Dict[int, List[Tuple[int, int, int, int]]] = {}
    for i in spec.instances:
        rects_by_class.setdefault(i.class_id, []).append(_rect(i))

    def dist_to_class(y: int, x: int, cls: int) -> float:
        if cls == BACKGROUND:
            raise AssertionError("background handled separately")
        return min((_cheb_to_rect(y, x, r) for r in rects_by_class.get(cls, [])), default=math.inf)

    breakdown: Dict[int, List[int]] = {}
    # (gt class, min radius) for every error pixel; radius math.inf = never
    misloc: List[Tuple[int, float]] = []
    instances = []
    fg_area = 0
    leading_total = 0
    for k, i in enumerate(spec.instances):
        cls = i.class_id
        rect = _rect(i)
        fg_area += i.area
        e = errors.get(k)
        acc = 1.0
        if e is None:
            add(cls, cls, i.area)
        elif e.kind == SHIFT:
            oh = max(i.height - abs(e.dy), 0)
            ow = max(i.width - abs(e.dx), 0)
            overlap = oh * ow
            lost = i.area - overlap
            acc = overlap / i.area
            add(cls, cls, overlap)
            add(cls, BACKGROUND, lost)
            add(BACKGROUND, cls, lost)
            leading_total += lost
            breakdown.setdefault(cls, [0, 0, 0])[0] += lost
            moved = _rect(i, e.dy, e.dx)
            for y in range(rect[0], rect[2] + 1):
                for x in range(rect[1], rect[3] + 1):
                    if _cheb_to_rect(y, x, moved) > 0:
                        misloc.append((cls, _cheb_to_outside(y, x, rect)))
            for y in range(moved[0], moved[2] + 1):
                for x in range(moved[1], moved[3] + 1):
                    if _cheb_to_rect(y, x, rect) > 0:
                        misloc.append((BACKGROUND, dist_to_class(y, x, cls)))
        elif e.kind == BACKGROUND_SWALLOW:
            acc = 0.0
            add(cls, BACKGROUND, i.area)
            breakdown.setdefault(cls, [0, 0, 0])[0] += i.area
            for y in range(rect[0], rect[2] + 1):
                for x in range(rect[1], rect[3] + 1):
                    misloc.append((cls, _cheb_to_outside(y, x, rect)))
        else:
            acc = 0.0
            add(cls, e.target, i.area)
            slot = 1 if e.kind == GROUP_SWAP else 2
            breakdown.setdefault(cls, [0, 0, 0])[slot] += i.area
            for y in range(rect[0], rect[2] + 1):
                for x in range(rect[1], rect[3] + 1):
                    misloc.append((cls, dist_to_class(y, x, e.target)))
        instances.append(
            {
                "instance_id": k + 1,
                "class_id": cls,
                "pixel_count": i.area,
                "bbox": list(rect),
                "aspect_ratio": i.width / i.height,
                "accuracy": acc,
            }
        )
    add(BACKGROUND, BACKGROUND, spec.height * spec.width - fg_area - leading_total)

    by_class: Dict[int, List[int]] = {}
    for n, rec in enumerate(instances):
        by_class.setdefault(rec["class_id"], []).append(n)
    for members in by_class.values():
        sb = _expected_bins([instances[n]["pixel_count"] for n in members])
        ab = _expected_bins([instances[n]["aspect_ratio"] for n in members])
        for n, s, a in zip(members, sb, ab):
            instances[n]["size_bin"] = SIZE_BINS[s]
            instances[n]["aspect_bin"] = ASPECT_BINS[a]

    correctable = {}
    for r in spec.radii:
        per: Dict[int, int] = {}
        for cls, need in misloc:
            if need <= r:
                per[cls] = per.get(cls, 0) + 1
        correctable[str(r)] = {str(c): n for c, n in sorted(per.items())}

    # uncertainty levels from the float32-rounded probabilities
    conf, rest, top, second = lv["conf"], lv["rest"], lv["top"], lv["second"]
    ok_re = _entropy_terms([(conf, 1), (rest, C - 1)], C)
    err_re = _entropy_terms([(top, 1), (second, 1), (rest, C - 2)], C)
    ok_rp = rest / conf
    err_rp = second / top
    n_inst_err = sum(1 for cls, _ in misloc if cls != BACKGROUND)
    n_inst_ok = fg_area - n_inst_err
    misloc_radius = MISLOC_RADIUS
    n_misloc = sum(1 for cls, need in misloc if cls != BACKGROUND and need <= misloc_radius)
    uncertainty = {}
    for name, ok, bad in (
        ("relative_entropy", ok_re, err_re),
        ("relative_probability", ok_rp, err_rp),
    ):
        cats = {"background": 0, "similar": 0, "dissimilar": 0}
        for c in breakdown.values():
            cats["background"] += c[0]
            cats["similar"] += c[1]
            cats["dissimilar"] += c[2]
        by_type = {
            "instance": {
                "count": fg_area,
                "mean": (n_inst_ok * ok + n_inst_err * bad) / fg_area if fg_area else None,
            },
            "misloc": {"count": n_misloc, "mean": bad if n_misloc else None},
        }
        for cat, n in cats.items():
            by_type[cat] = {"count": n, "mean": bad if n else None}
        uncertainty[name] = {"correct_pixel": ok, "error_pixel": bad, "by_error_type": by_type}

    gt_totals: Dict[int, int] = {}
    for (g, _), n in confusion.items():
        gt_totals[g] = gt_totals.get(g, 0) + n
    merged_gain = {}
    for cls, c in breakdown.items():
        if c[1]:
            merged_gain[str(cls)] = c[1] / gt_totals[cls]

    return {
        "confusion": [[g, p, n] for (g, p), n in sorted(confusion.items())],
        "instances": instances,
        "error_breakdown": {
            str(c): dict(zip(("background", "similar", "dissimilar"), v))
            for c, v in sorted(breakdown.items())
        },
        "mislocalisation": {"radii": list(spec.radii), "correctable": correctable},
        "misloc_radius": misloc_radius,
        "uncertainty": uncertainty,
        "topn": {"1": _pooled_accuracy(confusion), "2": 1.0},
        "merged_accuracy_gain": merged_gain,
    }


def _pooled_accuracy(confusion: Dict[Tuple[int, int], int]) -> float:
    total = sum(confusion.values())
    return sum(n for (g, p), n in confusion.items() if g == p) / total


def _pick_dims(rng: np.random.Generator, count: int, lo: int, hi: int) -> List[Tuple[int, int]]:
    """``count`` (h, w) pairs with pairwise distinct areas and aspect ratios."""
    out: List[Tuple[int, int]] = []
    areas, ratios = set(), set()
    while len(out) < count:
        h, w = (int(v) for v in rng.integers(lo, hi + 1, size=2))
        ratio = (w // math.gcd(w, h), h // math.gcd(w, h))
        if h * w in areas or ratio in ratios:
            continue
        out.append((h, w))
        areas.add(h * w)
        ratios.add(ratio)
    return out


def random_scene_spec(seed: int, error_gap: float = 0.2) -> SceneSpec:
    """A 240 x 240 scene on a 10 x 10 grid of 24-pixel cells.

    Class 1 gets ten instances with distinct sizes and aspect ratios (so all
    five bins of both kinds are occupied) and one of each error kind; the
    other classes get a few instances with random errors.
    """
    rng = np.random.default_rng(seed)
    cell, grid, max_shift = 24, 10, 3
    groups = {"pair_a": (1, 2), "pair_b": (3, 4)}
    plan: List[int] = [1] * 10
    for cls in (2, 3, 4, 5):
        plan += [cls] * int(rng.integers(2, 5))
    dims = _pick_dims(rng, 10, 3, 14) + [
        tuple(int(v) for v in rng.integers(3, 15, size=2)) for _ in plan[10:]
    ]
    cells = rng.permutation(grid * grid)[: len(plan)]
    instances = []
    for cls, (h, w), c in zip(plan, dims, cells):
        y0, x0 = (int(c) // grid) * cell, (int(c) % grid) * cell
        top = y0 + 1 + max_shift + int(rng.integers(0, cell - 2 - 2 * max_shift - h + 1))
        left = x0 + 1 + max_shift + int(rng.integers(0, cell - 2 - 2 * max_shift - w + 1))
        instances.append(InstanceSpec(cls, top, left, h, w))

    kinds = list(ERROR_KINDS)
    chosen = rng.permutation(10)[:4]
    errors = []

    def make(kind: str, idx: int) -> ErrorSpec:
        if kind == SHIFT:
            while True:
                dy, dx = (int(v) for v in rng.integers(-max_shift, max_shift + 1, size=2))
                if (dy, dx) != (0, 0):
                    return ErrorSpec(SHIFT, idx, dx=dx, dy=dy)
        return ErrorSpec(kind, idx)

    for kind, idx in zip(kinds, chosen):
        errors.append(make(kind, int(idx)))
    for idx in range(10, len(plan)):
        if rng.random() < 0.5:
            cls = plan[idx]
            options = [SHIFT, BACKGROUND_SWALLOW, DISSIMILAR_SWAP]
            if cls in (1, 2, 3, 4):
                options.append(GROUP_SWAP)
            errors.append(make(options[int(rng.integers(len(options)))], idx))
    return SceneSpec(
        height=cell * grid,
        width=cell * grid,
        num_classes=6,
        instances=tuple(instances),
        errors=tuple(errors),
        groups=groups,
        score_model=ScoreModel(0.9, error_gap),
        seed=seed,
    )


def write_scene(scene: Scene, out_dir, image_id: str = "scene") -> Path:
    """Write a ready-to-run manifest plus the expected fragment.

    With a positive error gap the record carries scores (labels follow from
    argmax); with a tie the predicted label map is written instead, since
    argmax cannot recover the injected label from tied scores.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_taxonomy(scene.taxonomy, out / "taxonomy.json")
    save_label_png(out / f"{image_id}_gt.png", scene.gt)
    save_instance_png(out / f"{image_id}_inst.png", scene.instances)
    from PIL import Image

    Image.fromarray(scene.image).save(out / f"{image_id}.png")
    rec = {
        "image_id": image_id,
        "gt": f"{image_id}_gt.png",
        "instances": f"{image_id}_inst.png",
        "image": f"{image_id}.png",
    }
    if scene.spec.score_model.error_gap > 0:
        write_scr1(out / f"{image_id}_scores.scr1", scene.scores, PROBABILITIES)
        rec["scores"] = f"{image_id}_scores.scr1"
    else:
        save_label_png(out / f"{image_id}_pred.png", scene.pred)
        rec["pred"] = f"{image_id}_pred.png"
    save_manifest(out / "manifest.json", "synthetic", "taxonomy.json", [rec])
    with open(out / "expected.json", "w") as f:
        json.dump({"spec": scene.spec.to_dict(), "expected": scene.expected}, f, indent=2)
    with open(out / "scene_spec.json", "w") as f:
        json.dump(scene.spec.to_dict(), f, indent=2)
    return out / "manifest.json"


def compare_fragment(report: dict, expected: dict, tol: float = 1e-9) -> List[str]:
    """Differences between a single-scene report and the expected fragment.

    Integer counts must match exactly and real values within ``tol``. An
    empty list means the pipeline reproduced the scene.
    """
    bad: List[str] = []

    def close(a, b) -> bool:
        if a is None or b is None:
            return a is b
        return abs(a - b) <= tol

    if "metrics" in report:
        got = {(g, p): n for g, p, n in report["metrics"]["confusion"]}
        want = {(g, p): n for g, p, n in expected["confusion"]}
        if got != want:
            bad.append(f"confusion: got {sorted(got.items())}, want {sorted(want.items())}")

    if "instances" in report:
        got = {r["instance_id"]: r for r in report["instances"]}
        for w in expected["instances"]:
            g = got.get(w["instance_id"])
            if g is None:
                bad.append(f"instance {w['instance_id']} missing")
                continue
            for key in ("class_id", "pixel_count", "bbox", "size_bin", "aspect_bin"):
                if g[key] != w[key]:
                    bad.append(f"instance {w['instance_id']} {key}: got {g[key]}, want {w[key]}")
            for key in ("aspect_ratio", "accuracy"):
                if not close(g[key], w[key]):
                    bad.append(f"instance {w['instance_id']} {key}: got {g[key]}, want {w[key]}")
        if len(got) != len(expected["instances"]):
            bad.append(f"instance count: got {len(got)}, want {len(expected['instances'])}")

    if "error_breakdown" in report:
        zero = {"background": 0, "similar": 0, "dissimilar": 0}
        classes = set(report["error_breakdown"]) | set(expected["error_breakdown"])
        for c in sorted(classes):
            g = report["error_breakdown"].get(c, {}).get("counts", zero)
            w = expected["error_breakdown"].get(c, zero)
            if g != w:
                bad.append(f"error breakdown class {c}: got {g}, want {w}")

    sec = report.get("mislocalisation_gain")
    if sec:
        for r, w in expected["mislocalisation"]["correctable"].items():
            if r not in sec["radii"]:
                continue
            g = sec["radii"][r]["correctable"]
            if g != w:
                bad.append(f"correctable at radius {r}: got {g}, want {w}")

    for measure, w in expected["uncertainty"].items():
        sec = (report.get("uncertainty") or {}).get(measure)
        if not sec:
            continue
        if sec["misloc_radius"] != expected["misloc_radius"]:
            bad.append(f"misloc radius {sec['misloc_radius']} != {expected['misloc_radius']}")
            continue
        for etype, we in w["by_error_type"].items():
            ge = sec["by_error_type"][etype]
            if ge["count"] != we["count"] or not close(ge["mean"], we["mean"]):
                bad.append(f"{measure} {etype}: got {ge}, want {we}")

    if "topn" in report:
        for n, w in expected["topn"].items():
            if n in report["topn"] and not close(report["topn"][n]["total_pixel_acc"], w):
                bad.append(f"top-{n} accuracy: got {report['topn'][n]['total_pixel_acc']}, want {w}")

    if "merged_groups" in report:
        gains = report["merged_groups"]["gains"]
        for c, g in gains.items():
            w = expected["merged_accuracy_gain"].get(c, 0.0)
            if g["accuracy_gain"] is not None and not close(g["accuracy_gain"], w):
                bad.append(f"merged accuracy gain class {c}: got {g['accuracy_gain']}, want {w}")
    return bad
