"""Loading manifests, label/instance PNGs and SCR1 score tensors.

SCR1 layout (little-endian)::

    b"SCR1" | u32 H | u32 W | u32 C | u8 kind | H*W*C float32, channels innermost

``kind`` is 0 for probabilities and 1 for logits.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from .core import LabelError, Taxonomy

__all__ = [
    "ManifestError",
    "UnsupportedLayoutError",
    "ScoreFormatError",
    "ManifestRecord",
    "Manifest",
    "load_taxonomy",
    "save_taxonomy",
    "load_manifest",
    "save_manifest",
    "load_label_png",
    "load_instance_png",
    "save_label_png",
    "save_instance_png",
    "load_rgb",
    "read_scr1",
    "write_scr1",
    "load_scores",
    "softmax",
    "check_normalized",
    "bicubic_resize",
    "PROBABILITIES",
    "LOGITS",
]

PROBABILITIES = "probabilities"
LOGITS = "logits"
_KIND_CODES = {PROBABILITIES: 0, LOGITS: 1}
_MAGIC = b"SCR1"
_HEADER = struct.Struct("<4sIIIB")
NORM_TOL = 1e-5

PathLike = Union[str, os.PathLike]


class ManifestError(ValueError):
    pass


class UnsupportedLayoutError(ValueError):
    pass


class ScoreFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRecord:
    image_id: str
    gt: Path
    instances: Optional[Path] = None
    instance_classes: Optional[Path] = None
    pred: Optional[Path] = None
    scores: Optional[Path] = None
    image: Optional[Path] = None


@dataclass(frozen=True)
class Manifest:
    dataset: str
    taxonomy_path: Path
    taxonomy: Taxonomy
    records: Tuple[ManifestRecord, ...]
    path: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def has_scores(self) -> bool:
        return bool(self.records) and all(r.scores is not None for r in self.records)


def load_taxonomy(path: PathLike) -> Taxonomy:
    with open(path) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}: {e}") from e
    return Taxonomy.from_dict(d)


def save_taxonomy(t: Taxonomy, path: PathLike) -> None:
    with open(path, "w") as f:
        json.dump(t.to_dict(), f, indent=2)


_RECORD_PATH_KEYS = ("gt", "instances", "instance_classes", "pred", "scores", "image")


def load_manifest(path: PathLike) -> Manifest:
    """Parse and validate a manifest; relative paths resolve against its folder."""
    path = Path(path)
    try:
        with open(path) as f:
            d = json.load(f)
    except FileNotFoundError as e:
        raise ManifestError(f"manifest not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: {e}") from e
    if not isinstance(d, dict) or "records" not in d or "taxonomy_path" not in d:
        raise ManifestError("manifest needs 'taxonomy_path' and 'records'")
    base = path.parent

    def resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q

    tax_path = resolve(d["taxonomy_path"])
    if not tax_path.exists():
        raise ManifestError(f"taxonomy file missing: {tax_path}")
    taxonomy = load_taxonomy(tax_path)

    seen = set()
    records = []
    for i, r in enumerate(d["records"]):
        if "image_id" not in r or "gt" not in r:
            raise ManifestError(f"record {i}: 'image_id' and 'gt' are required")
        iid = str(r["image_id"])
        if iid in seen:
            raise ManifestError(f"duplicate image_id {iid!r}")
        seen.add(iid)
        has_pred, has_scores = r.get("pred") is not None, r.get("scores") is not None
        if has_pred and has_scores:
            raise ManifestError(f"record {iid!r}: give either 'pred' or 'scores', not both")
        if not (has_pred or has_scores):
            raise ManifestError(f"record {iid!r}: one of 'pred' or 'scores' is required")
        kw = {}
        for key in _RECORD_PATH_KEYS:
            if r.get(key) is None:
                continue
            p = resolve(r[key])
            if not p.exists():
                raise ManifestError(f"record {iid!r}: missing file {p}")
            kw[key] = p
        records.append(ManifestRecord(image_id=iid, **kw))
    return Manifest(
        dataset=str(d.get("dataset", "")),
        taxonomy_path=tax_path,
        taxonomy=taxonomy,
        records=tuple(records),
        path=path,
    )


def save_manifest(
    path: PathLike, dataset: str, taxonomy_path: str, records: Sequence[Dict[str, str]]
) -> None:
    with open(path, "w") as f:
        json.dump(
            {"dataset": dataset, "taxonomy_path": taxonomy_path, "records": list(records)},
            f,
            indent=2,
        )


def _read_index_png(path: PathLike) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("L", "P", "I;16", "I;16B", "I;16L", "I"):
            arr = np.array(im)
        else:
            raise UnsupportedLayoutError(
                f"{path}: mode {im.mode!r}; expected single-channel or palette PNG"
            )
    if arr.ndim != 2:
        raise UnsupportedLayoutError(f"{path}: expected a 2-D image, got shape {arr.shape}")
    return arr.astype(np.int64)


def load_label_png(path: PathLike, t: Taxonomy) -> np.ndarray:
    """Read a label map; palette PNGs are read by index, not colour."""
    arr = _read_index_png(path)
    t.to_indices(arr)
    return arr


def load_instance_png(path: PathLike) -> np.ndarray:
    arr = _read_index_png(path)
    if arr.size and arr.min() < 0:
        raise LabelError(f"{path}: negative instance id")
    return arr


def save_label_png(path: PathLike, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 65535:
        raise ValueError("label values must fit in 16 bits")
    if labels.max() <= 255:
        Image.fromarray(labels.astype(np.uint8), mode="L").save(path)
    else:
        Image.fromarray(labels.astype(np.uint16)).save(path)


def save_instance_png(path: PathLike, inst: np.ndarray) -> None:
    inst = np.asarray(inst)
    if inst.min() < 0 or inst.max() > 65535:
        raise ValueError("instance ids must fit in 16 bits")
    Image.fromarray(inst.astype(np.uint16)).save(path)


def load_rgb(path: PathLike) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("RGB"))


def write_scr1(path: PathLike, data: np.ndarray, kind: str = PROBABILITIES) -> None:
    data = np.asarray(data)
    if data.ndim != 3:
        raise ScoreFormatError(f"score tensor must be H x W x C, got {data.shape}")
    if kind not in _KIND_CODES:
        raise ScoreFormatError(f"unknown score kind {kind!r}")
    h, w, c = data.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, h, w, c, _KIND_CODES[kind]))
        f.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_scr1(path: PathLike) -> Tuple[np.ndarray, str]:
    """Return the raw float32 tensor and its kind tag."""
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ScoreFormatError(f"{path}: truncated header")
        magic, h, w, c, code = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise ScoreFormatError(f"{path}: bad magic {magic!r}")
        kinds = {v: k for k, v in _KIND_CODES.items()}
        if code not in kinds:
            raise ScoreFormatError(f"{path}: unknown kind byte {code}")
        body = f.read()
    expected = h * w * c * 4
    if len(body) != expected:
        raise ScoreFormatError(f"{path}: payload is {len(body)} bytes, expected {expected}")
    data = np.frombuffer(body, dtype="<f4").reshape(h, w, c)
    return data, kinds[code]


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def check_normalized(p: np.ndarray, tol: float = NORM_TOL) -> None:
    if (p < 0).any():
        raise ScoreFormatError("negative probabilities")
    s = p.sum(axis=-1)
    if np.abs(s - 1.0).max(initial=0.0) > tol:
        raise ScoreFormatError(f"probabilities not normalized (max |sum-1| = {np.abs(s - 1).max():.3g})")


def load_scores(path: PathLike, t: Taxonomy, kind: Optional[str] = None) -> np.ndarray:
    """Load an SCR1 file as float64 per-pixel probabilities (H x W x C).

    ``kind`` defaults to the tag stored in the file; passing a different one
    is an error. Logits are turned into probabilities with a max-shifted
    softmax.
    """
    data, file_kind = read_scr1(path)
    if kind is not None and kind != file_kind:
        raise ScoreFormatError(f"{path}: file holds {file_kind}, caller asked for {kind}")
    if data.shape[2] != t.num_classes:
        raise ScoreFormatError(
            f"{path}: {data.shape[2]} channels but taxonomy has {t.num_classes} classes"
        )
    if not np.isfinite(data).all():
        raise ScoreFormatError(f"{path}: non-finite values")
    if file_kind == LOGITS:
        return softmax(data)
    probs = data.astype(np.float64)
    check_normalized(probs)
    return probs


def _cubic_kernel(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    x = np.abs(x)
    out = np.zeros_like(x)
    near = x <= 1
    far = (x > 1) & (x < 2)
    xn, xf = x[near], x[far]
    out[near] = (a + 2) * xn**3 - (a + 3) * xn**2 + 1
    out[far] = a * xf**3 - 5 * a * xf**2 + 8 * a * xf - 4 * a
    return out


def _resample_matrix(n_in: int, n_out: int, scale: float) -> np.ndarray:
    """(n_out, n_in) cubic-convolution weights, centre-aligned, clamped taps."""
    dst = np.arange(n_out, dtype=np.float64)
    src = (dst + 0.5) / scale - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    base = np.floor(src).astype(np.int64)
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for off in (-1, 0, 1, 2):
        tap = base + off
        w = _cubic_kernel(src - tap)
        np.add.at(m, (rows, np.clip(tap, 0, n_in - 1)), w)
    return m


def bicubic_resize(
    grid: np.ndarray,
    factor: Optional[float] = None,
    size: Optional[Tuple[int, int]] = None,
) -> np.ndarray:
    """Cubic-convolution resize (a = -0.5) of a 2-D grid or H x W x C stack.

    Output shape is ``round(factor * H), round(factor * W)`` unless ``size``
    gives it directly. Sample coordinates are clamped to the valid range.
    """
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim not in (2, 3) or g.shape[0] == 0 or g.shape[1] == 0:
        raise ValueError(f"expected a nonempty 2-D grid or H x W x C stack, got {g.shape}")
    if not np.isfinite(g).all():
        raise ValueError("grid holds non-finite values")
    h, w = g.shape[:2]
    if size is None:
        if factor is None or not factor > 0:
            raise ValueError("factor must be positive")
        out_h, out_w = int(round(factor * h)), int(round(factor * w))
        sy = sx = float(factor)
    else:
        out_h, out_w = size
        sy, sx = out_h / h, out_w / w
    if out_h < 1 or out_w < 1:
        raise ValueError("resize would produce an empty grid")
    wy = _resample_matrix(h, out_h, sy)
    wx = _resample_matrix(w, out_w, sx)
    if g.ndim == 2:
        return wy @ g @ wx.T
    return np.einsum("ah,hwc,bw->abc", wy, g, wx)
