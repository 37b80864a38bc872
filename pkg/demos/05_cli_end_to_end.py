"""The `diag` command line from synthetic data to charts.

Generates a seeded scene, analyses it, checks the report against what the
generator planted, and re-exports tables and charts from the JSON.

Run: python demos/05_cli_end_to_end.py [output dir]
"""
from __future__ import annotations

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from segdiag.synth import compare_fragment

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())


def diag(*args):
    cmd = [sys.executable, "-m", "segdiag.cli", *map(str, args)]
    print("$ diag", " ".join(map(str, args)), flush=True)
    subprocess.run(cmd, check=True)


diag("synth", "--seed", 5, "--out", out / "scene")
diag("run", "--manifest", out / "scene" / "manifest.json", "--out", out / "report",
     "--misloc-radii", "0,1,2,3,4,5,10", "--topn", 2, "--jobs", 2)
report = json.loads((out / "report" / "report.json").read_text())
expected = json.loads((out / "scene" / "expected.json").read_text())["expected"]
diff = compare_fragment(report, expected)
print("report matches the generator's expectations" if not diff else "\n".join(diff))
diag("export", "--report", out / "report" / "report.json", "--out", out / "export")
print("charts:", sorted(p.name for p in (out / "export" / "charts").glob("*.svg")))
