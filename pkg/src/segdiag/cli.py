"""``diag`` command line: run, refine, synth, export.

Exit codes: 0 success, 1 configuration error, 2 every image failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .core import TaxonomyError
from .ingest import ManifestError, load_manifest

log = logging.getLogger("segdiag")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2


def _ints(text: str) -> List[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _floats(text: str) -> List[Optional[float]]:
    return [None if x.strip() in ("inf", "") else float(x) for x in text.split(",")]


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diag", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="analyse a manifest and write report.json, tables, charts")
    r.add_argument("--manifest", required=True)
    r.add_argument("--config", help="JSON RunConfig; command-line flags override it")
    r.add_argument("--out", required=True)
    r.add_argument("--jobs", type=int)
    r.add_argument("--analyses", help="comma separated subset of analyses")
    r.add_argument("--misloc-radii", type=_ints)
    r.add_argument("--misloc-radius", type=int, help="radius used for uncertainty by error type")
    r.add_argument("--distance-edges", type=_floats, help="comma separated; 'inf' allowed")
    r.add_argument("--distance-boundary", choices=("any", "same_class"))
    r.add_argument("--topn", type=int)
    r.add_argument("--exclude-bg-gt", action="store_true", default=None)
    r.add_argument("--exclude-misloc-from-breakdown", action="store_true", default=None)
    r.add_argument("--bin-scope", choices=("per-class", "global"))
    r.add_argument("--bins", dest="bins_path", help="JSON bin scheme to reuse instead of fitting")
    r.add_argument("--measures", help="comma separated uncertainty measures")
    r.add_argument("--resize-scores", action="store_true", default=None)
    r.add_argument("--no-charts", action="store_true")

    f = sub.add_parser("refine", help="zoom-in refinement of small instances")
    f.add_argument("--manifest", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--scorer", required=True, help="command with {input} and {output} placeholders")
    f.add_argument("--classes", required=True, help="comma separated class ids or names")
    f.add_argument("--mode", nargs="+", default=["max_activation"], choices=("max_activation", "gt_bbox"))
    f.add_argument("--crop-side", type=int, default=64)
    f.add_argument("--factor", type=float, default=4.0)
    f.add_argument("--margin", type=int, default=16)
    f.add_argument("--timeout", type=float, default=300.0)
    f.add_argument("--workers", type=int, default=1)
    f.add_argument("--bin-scope", choices=("per-class", "global"), default="per-class")
    f.add_argument("--bins", dest="bins_path")

    s = sub.add_parser("synth", help="write a synthetic scene with its expected report fragment")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--spec", help="SceneSpec JSON")
    g.add_argument("--seed", type=int, help="generate a random scene spec from this seed")
    s.add_argument("--error-gap", type=float, default=0.2, help="top-2 gap for --seed scenes")
    s.add_argument("--out", required=True)
    s.add_argument("--image-id", default="scene")

    e = sub.add_parser("export", help="re-emit CSV tables and SVG charts from a report.json")
    e.add_argument("--report", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--no-charts", action="store_true")
    return p


def _run_config(args):
    from .report import RunConfig

    base = RunConfig.from_file(args.config).to_dict() if args.config else {}
    over = {
        "misloc_radii": args.misloc_radii,
        "misloc_radius": args.misloc_radius,
        "distance_edges": args.distance_edges,
        "distance_boundary": args.distance_boundary,
        "topn": args.topn,
        "exclude_bg_gt": args.exclude_bg_gt,
        "exclude_misloc_from_breakdown": args.exclude_misloc_from_breakdown,
        "bin_scope": args.bin_scope,
        "bins_path": args.bins_path,
        "resize_scores": args.resize_scores,
        "jobs": args.jobs,
        "out": args.out,
    }
    if args.analyses:
        over["analyses"] = [a.strip() for a in args.analyses.split(",") if a.strip()]
    if args.measures:
        over["measures"] = [m.strip() for m in args.measures.split(",") if m.strip()]
    base.update({k: v for k, v in over.items() if v is not None})
    return RunConfig.from_dict(base)


def _cmd_run(args) -> int:
    from .report import run, write_report

    cfg = _run_config(args)
    report = run(args.manifest, cfg)
    path = write_report(report, args.out, charts=not args.no_charts)
    meta = report["metadata"]
    print(f"analysed {meta['num_analysed']}/{meta['num_images']} images -> {path}")
    return EXIT_OK


def _cmd_refine(args) -> int:
    from .refine import RefineConfig, ScorerSpec
    from .report import run_refine, write_report

    manifest = load_manifest(args.manifest)
    t = manifest.taxonomy
    targets = []
    for tok in args.classes.split(","):
        tok = tok.strip()
        targets.append(int(tok) if tok.lstrip("-").isdigit() else t.id_of(tok))
    cfg = RefineConfig(
        target_classes=tuple(targets),
        crop_side=args.crop_side,
        factor=args.factor,
        mode=args.mode[0],
        margin=args.margin,
        scorer=ScorerSpec.from_string(args.scorer, args.timeout),
        workers=args.workers,
    )
    report = run_refine(manifest, cfg, args.mode, args.bin_scope, args.bins_path)
    path = write_report(report, args.out)
    sec = report["refinement"]
    print(f"refined {len(sec['selection'])} selected instances "
          f"({len(sec['skipped'])} skipped, {len(sec['failures'])} failed) -> {path}")
    if sec["selection"] and not any(sec["crops"].values()):
        return EXIT_DATA  # nothing could be refined
    return EXIT_OK


def _cmd_synth(args) -> int:
    from .synth import SceneSpec, generate, random_scene_spec, write_scene

    if args.spec:
        spec = SceneSpec.from_dict(json.loads(Path(args.spec).read_text()))
    else:
        spec = random_scene_spec(args.seed, args.error_gap)
    path = write_scene(generate(spec), args.out, args.image_id)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_export(args) -> int:
    from .report import write_report

    report = json.loads(Path(args.report).read_text())
    write_report(report, args.out, charts=not args.no_charts)
    print(f"exported tables and charts to {args.out}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    from .refine import ScorerError
    from .report import ConfigError, DataError

    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {"run": _cmd_run, "refine": _cmd_refine, "synth": _cmd_synth, "export": _cmd_export}
    try:
        return handlers[args.command](args)
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ManifestError, TaxonomyError, ScorerError, ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
