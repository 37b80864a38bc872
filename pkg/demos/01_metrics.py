"""Pixel metrics on a hand-sized example, then top-N and merged groups.

Run: python demos/01_metrics.py
"""
from __future__ import annotations

import numpy as np

from segdiag.core import Taxonomy, accumulate_confusion
from segdiag.metrics import class_metrics, merged_group_metrics, topn_metrics

t = Taxonomy.from_dict({
    "classes": [{"id": 0, "name": "background"}, {"id": 1, "name": "cat"},
                {"id": 2, "name": "dog"}, {"id": 3, "name": "car"}],
    "background_id": 0,
    "groups": {"animals": [1, 2]},
})

gt = np.array([[1, 1, 1, 1, 2, 2, 2, 2]])
pred = np.array([[1, 1, 1, 2, 2, 2, 1, 1]])
cm = accumulate_confusion(gt, pred, t)
m = class_metrics(cm)
print("per-class accuracy:", m.accuracy)  # cat 3/4, dog 2/4
print("per-class IoU:     ", m.iou)
print("total accuracy:    ", m.total_pixel_acc)

# cats and dogs mistaken for each other stop counting once the group is merged
merged = merged_group_metrics(cm, t)
print("merged accuracy gain:", merged.accuracy_gain)

# top-N: a pixel counts as correct when its GT label is among the N best scores
rng = np.random.default_rng(0)
gt = rng.integers(0, 4, (32, 32))
scores = rng.dirichlet(np.ones(4), size=(32, 32))
for n in range(1, 5):
    print(f"top-{n} total accuracy: {topn_metrics(gt, scores, n, t).total_pixel_acc:.3f}")
