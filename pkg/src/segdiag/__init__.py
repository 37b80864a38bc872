"""Diagnostics for semantic segmentation predictions.

Feed it ground truth, instance masks and prediction dumps; get per-class
metrics, size/shape sensitivity, an error taxonomy, mislocalisation gains,
uncertainty statistics and a zoom-in refinement harness.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .core import ConfusionMatrix, InstanceRecord, Taxonomy, accumulate_confusion, extract_instances
from .ingest import Manifest, load_manifest, load_scores, load_taxonomy
from .report import RunConfig, run, write_report

__all__ = [
    "__version__",
    "ConfusionMatrix",
    "InstanceRecord",
    "Taxonomy",
    "accumulate_confusion",
    "extract_instances",
    "Manifest",
    "load_manifest",
    "load_scores",
    "load_taxonomy",
    "RunConfig",
    "run",
    "write_report",
]
