from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from conftest import make_taxonomy
from segdiag.ingest import save_instance_png, save_label_png, save_manifest, save_taxonomy, write_scr1
from segdiag.synth import generate, random_scene_spec, write_scene


def multi_scene_manifest(out: Path, seeds=(0, 1)) -> Path:
    """One manifest over several random scenes written side by side."""
    out = Path(out)
    records = []
    for s in seeds:
        write_scene(generate(random_scene_spec(s)), out, f"scene{s}")
        records += json.loads((out / "manifest.json").read_text())["records"]
    (out / "manifest.json").write_text(json.dumps(
        {"dataset": "synthetic", "taxonomy_path": "taxonomy.json", "records": records}, indent=2))
    return out / "manifest.json"


def strip_timestamp(text: str) -> str:
    d = json.loads(text)
    d["metadata"].pop("timestamp")
    return json.dumps(d, sort_keys=True)


def small_instance_manifest(tmp_path, rng, with_image=True) -> Path:
    """Images a and b hold one small class-3 instance each, c holds two,
    the rest one large instance each (sizes 9, 16, 25, 25, 144..900)."""
    tmp_path = Path(tmp_path)
    tmp_path.mkdir(parents=True, exist_ok=True)
    t = make_taxonomy(4)
    save_taxonomy(t, tmp_path / "tax.json")
    records = []
    layouts = {
        "a": [(5, 5, 3, 3)],
        "b": [(30, 30, 4, 4)],
        "c": [(5, 5, 5, 5), (30, 30, 5, 5)],
        "d": [(10, 10, 20, 20)],  # one large instance
        "e": [(2, 2, 30, 30)],
        "f": [(3, 3, 25, 25)],
        "g": [(20, 20, 15, 15)],
        "h": [(10, 30, 16, 16)],
        "i": [(30, 2, 12, 12)],
    }
    for name, boxes in layouts.items():
        gt = np.zeros((48, 48), np.uint8)
        inst = np.zeros((48, 48), np.uint16)
        for k, (y, x, hh, ww) in enumerate(boxes, start=1):
            gt[y:y + hh, x:x + ww] = 3
            inst[y:y + hh, x:x + ww] = k
        scores = np.full((48, 48, 4), 0.1, np.float32)
        scores[..., 0] = 0.7  # everything predicted background
        save_label_png(tmp_path / f"{name}_gt.png", gt)
        save_instance_png(tmp_path / f"{name}_inst.png", inst)
        write_scr1(tmp_path / f"{name}.scr1", scores)
        rec = {"image_id": name, "gt": f"{name}_gt.png", "instances": f"{name}_inst.png",
               "scores": f"{name}.scr1"}
        if with_image:
            Image.fromarray(rng.integers(0, 256, (48, 48, 3), dtype=np.uint8)).save(tmp_path / f"{name}.png")
            rec["image"] = f"{name}.png"
        records.append(rec)
    save_manifest(tmp_path / "manifest.json", "toy", "tax.json", records)
    return tmp_path / "manifest.json"
