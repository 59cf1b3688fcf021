#!/usr/bin/env python3
"""From raw points to the five-level feature hierarchy.

Builds a synthetic scene, collapses it into sparse pillars, and runs the
hybrid sparse/dense backbone, printing how occupancy thins out while
channel depth grows stage by stage.
"""

import numpy as np

from pillardet import (SceneSpec, WeightStore, backbone_forward,
                       generate_scene, pillarize)
from pillardet.config import config_from_dict, weight_layout

cfg = config_from_dict({
    "grid": {"x_min": -25.6, "x_max": 25.6, "y_min": -25.6, "y_max": 25.6,
             "z_min": -2.0, "z_max": 4.0, "pillar_size": 0.1},
    "backbone_channels": [16, 32, 64, 128, 256],
    "seed": 3,
})
grid = cfg.grid
weights = WeightStore.seeded(weight_layout(cfg), cfg.seed)

cloud, gt = generate_scene(SceneSpec(seed=21), grid)
print(f"scene: {len(cloud)} points, {len(gt)} objects on a "
      f"{grid.nx} x {grid.ny} grid of {grid.pillar_size} m pillars")

volume = pillarize(cloud, grid, weights)
total_cells = grid.nx * grid.ny
print(f"\npillarized: {volume.n_active} occupied pillars "
      f"({100 * volume.n_active / total_cells:.2f}% of {total_cells} cells), "
      f"{volume.channels} channels each")

feats = backbone_forward(volume, weights, cfg.backbone_channels)
print("\nstage  stride   grid        active     density  channels")
for name, v in (("C1", feats.c1), ("C2", feats.c2), ("C3", feats.c3),
                ("C4", feats.c4)):
    cells = v.nx * v.ny
    print(f"{name:<6}{v.stride:>6}   {v.nx}x{v.ny:<8}{v.n_active:>8}"
          f"{100 * v.n_active / cells:>11.2f}%{v.channels:>9}")
c5 = feats.c5
print(f"C5    {c5.stride:>6}   {c5.width}x{c5.height:<8}"
      f"{'dense':>8}{'100.00%':>12}{c5.channels:>9}")

print("\nThe first four stages stay sparse (only occupied sites carry "
      "features);\nthe last stage densifies and uses standard convolutions, "
      "so C5 covers the\nfull map even where no points landed.")
print(f"\nmax |C5| activation: {np.abs(c5.data).max():.3f} "
      f"(seeded weights, forward only)")
