#!/usr/bin/env python3
"""Center-based proposals: target painting, decoding, rescoring, NMS.

Encodes ground truth into heatmap/regression targets, decodes them back
(the paint-decode round trip), then shows how IoU-aware rescoring reorders
detections and how rotated NMS prunes duplicates.
"""

import math

import numpy as np

from pillardet import Box3D, GridSpec, nms_3d, rectify, rectify_detections
from pillardet.rpn import (Detection, decode_proposals, encode_targets,
                           targets_as_predictions)

spec = GridSpec(x_min=-25.6, x_max=25.6, y_min=-25.6, y_max=25.6,
                z_min=-2.0, z_max=4.0, pillar_size=0.1)
TOP_K = {0: 200, 1: 150, 2: 150}

print("== paint-decode round trip ==")
gt = [Box3D(4.2, -7.9, 0.3, 4.6, 2.1, 1.7, 0.8, class_id=0),
      Box3D(-11.0, 3.5, 0.1, 4.4, 2.0, 1.6, -2.2, class_id=0),
      Box3D(6.0, 10.0, 0.2, 0.9, 0.9, 1.7, 1.4, class_id=1)]
heads = {8: targets_as_predictions(encode_targets(gt, 8, spec, (0,))),
         4: targets_as_predictions(encode_targets(gt, 4, spec, (1, 2)))}
decoded = decode_proposals(heads, spec, TOP_K)
print(f"{len(gt)} boxes painted, {len(decoded)} decoded")
for d in decoded:
    g = min(gt, key=lambda b: (b.cx - d.box.cx) ** 2 + (b.cy - d.box.cy) ** 2)
    err = math.hypot(d.box.cx - g.cx, d.box.cy - g.cy)
    print(f"  class {d.class_id}: center error {err:.2e} m, "
          f"yaw error {abs(d.box.yaw - g.yaw):.2e} rad")

print("\n== IoU-aware rescoring: S^(1-beta) * W^beta ==")
print(f"{'S':>6}{'W_IoU':>8}{'beta=0':>9}{'beta=0.68':>11}{'beta=1':>9}")
for s, w in ((0.9, 0.3), (0.6, 0.8), (0.64, 0.25)):
    print(f"{s:>6.2f}{w:>8.2f}{rectify(s, w, 0.0):>9.3f}"
          f"{rectify(s, w, 0.68):>11.3f}{rectify(s, w, 1.0):>9.3f}")

print("\nA confident but badly localized box (high S, low W) drops below a "
      "\nmodest but well-localized one once beta weighs the IoU estimate in:")
over = Detection(Box3D(0, 0, 0, 4.6, 2.1, 1.7, 0.0), 0, score=0.95, iou_score=0.2)
solid = Detection(Box3D(9, 0, 0, 4.6, 2.1, 1.7, 0.0), 0, score=0.7, iou_score=0.85)
for beta in (0.0, 0.68):
    ranked = rectify_detections([over, solid], {0: beta, 1: beta, 2: beta})
    order = sorted(ranked, key=lambda d: -d.rectified_score)
    names = ["overconfident" if d.score == 0.95 else "well-localized"
             for d in order]
    print(f"  beta={beta:<5} ranking: {names[0]} > {names[1]}")

print("\n== rotated NMS at per-class thresholds 0.8 / 0.55 / 0.55 ==")
rng = np.random.default_rng(7)
cluster = []
base = Box3D(2.0, 1.0, 0.0, 4.6, 2.1, 1.7, 0.4, class_id=0)
for k in range(6):
    jig = Box3D(base.cx + rng.uniform(-0.3, 0.3), base.cy + rng.uniform(-0.3, 0.3),
                base.cz, base.length, base.width, base.height,
                base.yaw + rng.uniform(-0.05, 0.05), class_id=0)
    cluster.append(Detection(jig, 0, float(rng.uniform(0.5, 0.95)),
                             iou_score=0.8))
lone = Detection(Box3D(-15, -15, 0, 4.6, 2.1, 1.7, 1.0), 0, 0.6, 0.6)
kept = nms_3d(cluster + [lone], {0: 0.8, 1: 0.55, 2: 0.55})
print(f"{len(cluster)} overlapping + 1 isolated vehicle in "
      f"-> {len(kept)} survivors out")
for d in kept:
    print(f"  kept score={d.rectified_score:.3f} at "
          f"({d.box.cx:.1f}, {d.box.cy:.1f})")
