"""Crop, upsample and re-score small instances with an external scorer.

A stand-in scorer (a tiny Python script written to a temp dir) says
"class 1 everywhere"; the harness splices its output back into the scores
and reports how accuracy on the small instances changes.

Run: python demos/04_refinement.py
"""
from __future__ import annotations

import json
import sys
import tempfile
import textwrap
from pathlib import Path

import numpy as np

from segdiag.ingest import load_manifest
from segdiag.refine import RefineConfig, ScorerSpec
from segdiag.report import run_refine
from segdiag.synth import InstanceSpec, SceneSpec, generate, write_scene

SCORER = textwrap.dedent("""
    import sys
    import numpy as np
    from PIL import Image
    from segdiag.ingest import write_scr1
    src, dst, c = sys.argv[1], sys.argv[2], int(sys.argv[3])
    h, w = np.asarray(Image.open(src)).shape[:2]
    p = np.full((h, w, c), 0.01)
    p[..., 1] = 1.0
    write_scr1(dst, p / p.sum(-1, keepdims=True))
""")

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    (tmp / "scorer.py").write_text(SCORER)
    records = []
    # ten images, each with one class-1 object of growing size; the model
    # predicts background on the object pixels of all of them
    for k in range(10):
        side = 3 + 3 * k
        spec = SceneSpec(64, 64, 3, (InstanceSpec(1, 20, 20, side, side),
                                     InstanceSpec(2, 2, 2, 6, 8)))
        scene = generate(spec)
        scores = scene.scores.copy()
        obj = scene.gt == 1
        scores[obj] = [0.7, 0.2, 0.1]
        scene.scores[...] = scores
        write_scene(scene, tmp / "data", f"img{k}")
        # write_scene writes a one-image manifest; collect them into one
        records += json.loads((tmp / "data" / "manifest.json").read_text())["records"]
    (tmp / "data" / "manifest.json").write_text(json.dumps(
        {"dataset": "demo", "taxonomy_path": "taxonomy.json", "records": records}))
    manifest = load_manifest(tmp / "data" / "manifest.json")
    scorer = ScorerSpec((sys.executable, str(tmp / "scorer.py"), "{input}", "{output}", "3"), 60)
    cfg = RefineConfig((1,), crop_side=16, factor=4, scorer=scorer)
    out = run_refine(manifest, cfg, modes=("max_activation", "gt_bbox"))["refinement"]
    print("selected:", [(s["image_id"], s["size_bin"]) for s in out["selection"]])
    for method, rows in out["methods"].items():
        for r in rows:
            print(f"  {method:<15} class {r['class_id']}: XS acc {r['XS_instance_acc']} S acc {r['S_instance_acc']}")
