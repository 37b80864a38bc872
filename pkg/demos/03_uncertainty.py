"""Uncertainty measures, their relation to object boundaries and errors.

Run: python demos/03_uncertainty.py
"""
from __future__ import annotations

import numpy as np
from scipy.ndimage import uniform_filter

from segdiag.synth import generate, random_scene_spec
from segdiag.uncertainty import (
    boundary_distance_map,
    fgbg_from_uncertainty,
    relative_entropy,
    relative_probability,
    uncertainty_by_distance,
    uncertainty_by_error_type,
    uncertainty_map,
)

for name, p in (("uniform over 5", np.full(5, 0.2)), ("one-hot", np.eye(5)[0]), ("peaked", np.array([0.6, 0.3, 0.1]))):
    print(f"{name:<15} relative entropy {float(relative_entropy(p)):.3f}  relative probability {float(relative_probability(p)):.3f}")

scene = generate(random_scene_spec(7))
t = scene.taxonomy
# the generator's scores are piecewise constant; blurring them mimics a
# network whose confidence drops near object edges
scores = uniform_filter(scene.scores, size=(7, 7, 1), mode="nearest")
scores /= scores.sum(-1, keepdims=True)
dmap = boundary_distance_map(scene.gt)
for measure in ("relative_entropy", "relative_probability"):
    umap = uncertainty_map(scores, measure)
    print(f"\n{measure} by distance to the nearest GT boundary:")
    for b in uncertainty_by_distance(umap, dmap, (0, 1, 2, 4, 8, 16, np.inf)):
        print(f"  [{b['lo']}, {b['hi']}): n={b['count']:>6} median={b['median']:.3f}")
    sums = uncertainty_by_error_type(scene.gt, scene.pred, umap, t, misloc_radius=5, inst=scene.instances)
    print("  mean by error type:", {k: round(v, 3) for k, v in sums.means().items() if v == v})
    fg = fgbg_from_uncertainty(umap, scene.gt, t)
    print(f"  above-average uncertainty as a boundary detector: precision {fg.precision:.3f} recall {fg.recall:.3f}")
