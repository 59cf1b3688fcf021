#!/usr/bin/env python3
"""End-to-end run: points -> pillars -> pyramid -> proposals -> refinement.

Uses seeded random weights (no training in this artifact), so detections
are not meaningful — the demo shows the mechanics, the per-stage costs,
the shape contract, and full determinism.
"""

import time

from pillardet import DetectionPipeline, SceneSpec, generate_scene
from pillardet.config import config_from_dict
from pillardet.fileio import format_detections
from pillardet.pipeline import format_shapes

cfg = config_from_dict({
    "grid": {"x_min": -25.6, "x_max": 25.6, "y_min": -25.6, "y_max": 25.6,
             "z_min": -2.0, "z_max": 4.0, "pillar_size": 0.1},
    "backbone_channels": [16, 32, 64, 128, 256],
    "neck_channels": 128,
    "pool_channels": 128,
    "seed": 6,
})
print(f"grid {cfg.grid.nx} x {cfg.grid.ny} at {cfg.grid.pillar_size} m, "
      f"channel plan {cfg.backbone_channels}")

t0 = time.perf_counter()
pipeline = DetectionPipeline(cfg)
print(f"seeded weight store built in {time.perf_counter() - t0:.2f}s "
      f"({len(pipeline.weights.names())} tensors)")

cloud, gt = generate_scene(SceneSpec(seed=42), cfg.grid)
print(f"scene: {len(cloud)} points, {len(gt)} ground-truth objects\n")

result = pipeline.run(cloud)
print(f"shape contract: {format_shapes(result.shapes)}")
print("\nper-stage timings:")
for stage, seconds in result.timings.items():
    print(f"  {stage:<12}{seconds * 1000:>8.1f} ms")
print(f"\nproposals after NMS: {len(result.proposals)}")
print(f"refined detections:  {len(result.detections)}")

again = pipeline.run(cloud)
same = format_detections(result.detections) == format_detections(again.detections)
print(f"second run byte-identical: {same}")

top = sorted(result.detections, key=lambda d: -d.rectified_score)[:3]
print("\nhighest-scored detections (random weights, illustrative only):")
for d in top:
    print(f"  class {d.class_id}  score {d.score:.3f}  "
          f"center ({d.box.cx:+.1f}, {d.box.cy:+.1f})  "
          f"size {d.box.length:.1f}x{d.box.width:.1f}x{d.box.height:.1f}")
print("\nWith trained weights this same graph would localize the synthetic "
      "boxes;\nevery numeric kernel feeding it is pinned by the oracle "
      "suites (see\n`pillardet verify` and tests/test_acceptance.py).")
