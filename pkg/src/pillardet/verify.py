"""Self-check suites comparing fast paths against brute-force oracles.

Shipped with the library (not only the test tree) so a deployment can
re-run the correctness gates in the field: rotated IoU against Monte
Carlo, sparse against dense convolution, greedy against exhaustive NMS,
analytic against finite-difference bilinear gradients, and segmentation
labels against direct point-in-rect evaluation. Budgets are fixed;
everything is seeded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (Box3D, RotatedRect2D, iou_3d, point_in_rect,
                       project_to_bev, rotated_iou_bev)
from .grid import DenseFeatureMap, GridSpec, SparsePillarVolume, densify, sparse_conv2d
from .oracles import (dense_conv_reference, exhaustive_nms,
                      finite_difference_grad, mc_rotated_iou)
from .rcnn import aux_seg_labels, bilinear_sample, roi_grid_points
from .rpn import Detection, nms_3d


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    max_error: float
    budget: str
    detail: str = ""


def random_rect(rng: np.random.Generator, span: float = 3.0) -> RotatedRect2D:
    return RotatedRect2D(rng.uniform(-span, span), rng.uniform(-span, span),
                         rng.uniform(0.8, 5.0), rng.uniform(0.8, 5.0),
                         rng.uniform(-math.pi, math.pi))


def random_box(rng: np.random.Generator, span: float = 10.0) -> Box3D:
    return Box3D(rng.uniform(-span, span), rng.uniform(-span, span),
                 rng.uniform(-1.0, 1.0), rng.uniform(0.8, 5.0),
                 rng.uniform(0.8, 5.0), rng.uniform(0.8, 2.5),
                 rng.uniform(-math.pi, math.pi))


def random_volume(rng: np.random.Generator, nx: int, ny: int, channels: int,
                  density: float = 0.15) -> SparsePillarVolume:
    n = max(1, int(nx * ny * density))
    keys = np.sort(rng.choice(nx * ny, size=n, replace=False))
    coords = np.stack([keys // ny, keys % ny], axis=1)
    return SparsePillarVolume(1, nx, ny, coords, rng.normal(size=(n, channels)))


def geometry_suite(pairs: int = 150, samples: int = 1_000_000,
                   seed: int = 0, tolerance: float = 3e-3) -> SuiteResult:
    """Clipping IoU vs Monte Carlo, plus symmetry and rigid invariance."""
    rng = np.random.default_rng(seed)
    max_mc = 0.0
    max_sym = 0.0
    max_rigid = 0.0
    for k in range(pairs):
        a = random_rect(rng)
        b = RotatedRect2D(a.cx + rng.uniform(-2, 2), a.cy + rng.uniform(-2, 2),
                          rng.uniform(0.8, 5.0), rng.uniform(0.8, 5.0),
                          rng.uniform(-math.pi, math.pi))
        iou = rotated_iou_bev(a, b)
        max_mc = max(max_mc, abs(iou - mc_rotated_iou(a, b, samples, seed=seed + k)))
        max_sym = max(max_sym, abs(iou - rotated_iou_bev(b, a)))
        # rigid motion applied to both rects
        tx, ty, rot = rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-math.pi, math.pi)
        c, s = math.cos(rot), math.sin(rot)
        moved = [RotatedRect2D(c * r.cx - s * r.cy + tx, s * r.cx + c * r.cy + ty,
                               r.length, r.width, r.yaw + rot) for r in (a, b)]
        max_rigid = max(max_rigid, abs(iou - rotated_iou_bev(*moved)))
    passed = max_mc <= tolerance and max_sym == 0.0 and max_rigid <= 1e-9
    return SuiteResult("geometry-mc-iou", passed, max(max_mc, max_rigid),
                       f"{pairs} pairs x {samples} samples",
                       f"mc={max_mc:.2e} sym={max_sym:.2e} rigid={max_rigid:.2e}")


def sparse_dense_suite(volumes: int = 40, seed: int = 1,
                       tolerance: float = 1e-5,
                       corrupt: bool = False) -> SuiteResult:
    """Densified sparse convolution vs the per-pixel dense reference.

    ``corrupt`` perturbs one kernel weight on the sparse side only — a
    negative control that must make the suite fail.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for mode, stride, subm in (("subm", 1, True), ("regular-s1", 1, False),
                               ("regular-s2", 2, False)):
        for _ in range(volumes):
            c_in, c_out = int(rng.integers(2, 6)), int(rng.integers(2, 6))
            v = random_volume(rng, 16, 16, c_in)
            w = rng.normal(size=(3, 3, c_in, c_out))
            w_sparse = w.copy()
            if corrupt:
                w_sparse[1, 1, 0, 0] += 1e-3
            out = sparse_conv2d(v, w_sparse, np.zeros(c_out), stride=stride,
                                submanifold=subm)
            ref = dense_conv_reference(densify(v).data, w, stride=stride)
            if subm:
                mask = np.zeros(ref.shape[:2], dtype=bool)
                mask[v.coords[:, 1], v.coords[:, 0]] = True
                ref = ref * mask[:, :, None]
            worst = max(worst, float(np.abs(densify(out).data - ref).max()))
    return SuiteResult("sparse-dense-conv", worst < tolerance, worst,
                       f"{volumes} volumes x 3 layer types",
                       f"max abs diff {worst:.2e}")


def nms_suite(scenes: int = 30, boxes_per_scene: int = 60,
              seed: int = 2) -> SuiteResult:
    """Greedy NMS must match the exhaustive-matrix oracle exactly."""
    rng = np.random.default_rng(seed)
    thresholds = {0: 0.8, 1: 0.55, 2: 0.55}
    mismatches = 0
    for _ in range(scenes):
        dets = []
        for _ in range(boxes_per_scene):
            box = random_box(rng)
            class_id = int(rng.integers(0, 3))
            score = float(rng.random())
            dets.append(Detection(Box3D(box.cx, box.cy, box.cz, box.length,
                                        box.width, box.height, box.yaw,
                                        class_id=class_id),
                                  class_id, score, iou_score=score))
        fast = nms_3d(dets, thresholds)
        slow = exhaustive_nms(dets, thresholds, iou_3d)
        if [id(d) for d in fast] != [id(d) for d in slow]:
            mismatches += 1
    return SuiteResult("nms-brute-force", mismatches == 0, float(mismatches),
                       f"{scenes} scenes x {boxes_per_scene} boxes",
                       f"{mismatches} mismatching scenes")


def bilinear_suite(samples: int = 200, seed: int = 3,
                   tolerance: float = 1e-4) -> SuiteResult:
    """Analytic bilinear gradients vs central finite differences."""
    rng = np.random.default_rng(seed)
    spec = GridSpec(x_min=0.0, x_max=0.8, y_min=0.0, y_max=0.8,
                    z_min=0.0, z_max=1.0, pillar_size=0.1)
    worst = 0.0
    for _ in range(samples):
        data = rng.normal(size=(8, 8, 1))
        m = DenseFeatureMap(1, data)
        p = (rng.uniform(-0.1, 0.9), rng.uniform(-0.1, 0.9))
        _, grads = bilinear_sample(m, spec, p)
        analytic = np.zeros((8, 8, 1))
        for (iy, ix), w in grads:
            analytic[iy, ix, 0] = w
        fd = finite_difference_grad(
            lambda x: bilinear_sample(DenseFeatureMap(1, x), spec, p)[0][0],
            data, h=1e-3)
        denom = np.maximum(np.abs(fd), 1e-6)
        rel = np.abs(analytic - fd) / denom
        worst = max(worst, float(rel[np.abs(fd) > 1e-9].max()
                                 if np.any(np.abs(fd) > 1e-9) else 0.0))
    return SuiteResult("bilinear-fd-grad", worst < tolerance, worst,
                       f"{samples} random (map, point) pairs",
                       f"max rel err {worst:.2e}")


def aux_label_suite(rois: int = 100, seed: int = 4) -> SuiteResult:
    """Grid-point labels vs direct per-point containment checks."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(rois):
        roi = random_box(rng, span=6.0)
        gts = [random_box(rng, span=6.0) for _ in range(int(rng.integers(1, 4)))]
        g = int(rng.integers(1, 9))
        labels = aux_seg_labels(roi, gts, g)
        pts = roi_grid_points(roi, g)
        for i in range(g):
            for j in range(g):
                inside = any(point_in_rect((pts[i, j, 0], pts[i, j, 1]),
                                           project_to_bev(b)) for b in gts)
                if bool(labels[i, j]) != inside:
                    mismatches += 1
    return SuiteResult("aux-seg-labels", mismatches == 0, float(mismatches),
                       f"{rois} RoIs", f"{mismatches} mismatching grid points")


def run_all(corrupt: bool = False) -> list[SuiteResult]:
    return [
        geometry_suite(),
        sparse_dense_suite(corrupt=corrupt),
        nms_suite(),
        bilinear_suite(),
        aux_label_suite(),
    ]
