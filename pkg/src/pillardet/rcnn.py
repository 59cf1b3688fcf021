"""Second-stage refinement: rotated RoI grid pooling on the BEV plane.

A G x G lattice of points is placed inside each proposal's rotated
footprint, features are bilinearly interpolated from the dense pooling
map, and a small MLP predicts a confidence logit plus seven box residuals.
An auxiliary per-grid-point segmentation head (training only) checks that
the pooled features carry enough structure to separate foreground from
background.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (Box3D, boxes_as_array, iou_3d_matrix, normalize_angle,
                       point_in_rect, project_to_bev)
from .grid import DenseFeatureMap, GridSpec, relu
from .rpn import Detection, _sigmoid
from .weights import WeightStore

N_RESIDUALS = 7  # dx/d, dy/d, dz/h, log-size ratios (3), dyaw


@dataclass(frozen=True)
class RoiPoolConfig:
    """Pooling / head geometry for the refinement stage."""

    grid_size: int = 7
    pool_stride: int = 4
    mlp_channels: tuple[int, int] = (256, 256)
    seg_hidden: int = 64

    def __post_init__(self):
        if self.grid_size < 1:
            raise ValueError("grid_size must be >= 1")


@dataclass(frozen=True)
class SampledProposals:
    """A seeded training sample of RoIs with IoU-derived labels."""

    rois: tuple[Box3D, ...]
    gt_index: np.ndarray           # (N,), -1 for negatives
    iou: np.ndarray                # (N,) best 3D IoU against gt
    positive: np.ndarray           # (N,) bool
    confidence_target: np.ndarray  # (N,) clamp(2*iou - 0.5, 0, 1)
    regression_target: np.ndarray  # (N, 7), zeros for negatives

    def __len__(self) -> int:
        return len(self.rois)


def roi_grid_points(roi: Box3D, grid_size: int) -> np.ndarray:
    """Evenly spaced G x G points in the rotated RoI, as (G, G, 2).

    Index [i, j] walks the length axis with i and the width axis with j;
    points are inset by half a grid cell so G = 1 lands on the center.
    """
    g = grid_size
    lx = (-0.5 + (np.arange(g) + 0.5) / g) * roi.length
    ly = (-0.5 + (np.arange(g) + 0.5) / g) * roi.width
    c, s = math.cos(roi.yaw), math.sin(roi.yaw)
    gx = roi.cx + c * lx[:, None] - s * ly[None, :]
    gy = roi.cy + s * lx[:, None] + c * ly[None, :]
    return np.stack([gx, gy], axis=-1)


def bilinear_sample(m: DenseFeatureMap, spec: GridSpec,
                    p: tuple[float, float]) -> tuple[np.ndarray, list]:
    """Interpolate the map at a BEV point; cell centers form the lattice.

    Points outside the map blend with zeros. Also returns the analytic
    gradient of the output w.r.t. the supporting cells as a list of
    ((iy, ix), weight) pairs (in-bounds cells only), one weight shared by
    every channel.
    """
    cell = spec.cell_size(m.stride)
    u = (p[0] - spec.x_min) / cell - 0.5
    v = (p[1] - spec.y_min) / cell - 0.5
    ix0, iy0 = math.floor(u), math.floor(v)
    tx, ty = u - ix0, v - iy0
    supports = (
        (iy0, ix0, (1 - ty) * (1 - tx)),
        (iy0, ix0 + 1, (1 - ty) * tx),
        (iy0 + 1, ix0, ty * (1 - tx)),
        (iy0 + 1, ix0 + 1, ty * tx),
    )
    value = np.zeros(m.channels)
    grads = []
    for iy, ix, w in supports:
        if 0 <= iy < m.height and 0 <= ix < m.width:
            value += w * m.data[iy, ix]
            grads.append(((iy, ix), w))
    return value, grads


def _bilinear_batch(m: DenseFeatureMap, spec: GridSpec,
                    pts: np.ndarray) -> np.ndarray:
    """Vectorized bilinear sampling of (M, 2) points -> (M, C)."""
    cell = spec.cell_size(m.stride)
    u = (pts[:, 0] - spec.x_min) / cell - 0.5
    v = (pts[:, 1] - spec.y_min) / cell - 0.5
    ix0 = np.floor(u).astype(np.int64)
    iy0 = np.floor(v).astype(np.int64)
    tx, ty = u - ix0, v - iy0
    out = np.zeros((len(pts), m.channels))
    for dy, dx, w in ((0, 0, (1 - ty) * (1 - tx)), (0, 1, (1 - ty) * tx),
                      (1, 0, ty * (1 - tx)), (1, 1, ty * tx)):
        iy, ix = iy0 + dy, ix0 + dx
        ok = (iy >= 0) & (iy < m.height) & (ix >= 0) & (ix < m.width)
        if np.any(ok):
            out[ok] += w[ok, None] * m.data[iy[ok], ix[ok]]
    return out


def pool_roi_features(rois: list[Box3D], m: DenseFeatureMap, spec: GridSpec,
                      grid_size: int) -> np.ndarray:
    """Pooled grid-point features for every RoI: (N, G, G, C)."""
    if not rois:
        return np.zeros((0, grid_size, grid_size, m.channels))
    pts = np.concatenate([roi_grid_points(r, grid_size).reshape(-1, 2)
                          for r in rois])
    feats = _bilinear_batch(m, spec, pts)
    return feats.reshape(len(rois), grid_size, grid_size, m.channels)


def encode_residuals(roi: Box3D, target: Box3D) -> np.ndarray:
    """Box residuals of ``target`` relative to ``roi``.

    Center deltas are world-frame, normalized by the RoI BEV diagonal
    (z by the RoI height); sizes are log ratios; yaw is the wrapped
    difference.
    """
    d = roi.bev_diagonal
    return np.array([
        (target.cx - roi.cx) / d,
        (target.cy - roi.cy) / d,
        (target.cz - roi.cz) / roi.height,
        math.log(target.length / roi.length),
        math.log(target.width / roi.width),
        math.log(target.height / roi.height),
        normalize_angle(target.yaw - roi.yaw),
    ])


def decode_residuals(roi: Box3D, residuals: np.ndarray) -> Box3D:
    d = roi.bev_diagonal
    r = residuals
    return Box3D(roi.cx + r[0] * d, roi.cy + r[1] * d,
                 roi.cz + r[2] * roi.height,
                 roi.length * math.exp(r[3]), roi.width * math.exp(r[4]),
                 roi.height * math.exp(r[5]),
                 roi.yaw + r[6], class_id=roi.class_id)


def rcnn_forward(rois: list[Box3D], m: DenseFeatureMap, spec: GridSpec,
                 weights: WeightStore, cfg: RoiPoolConfig
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shared MLP over flattened RoI grids.

    Returns (confidence logits (N,), residuals (N, 7), pooled grid
    features (N, G, G, C)); RoIs never interact, so any ordering works.
    """
    g = cfg.grid_size
    pooled = pool_roi_features(rois, m, spec, g)
    x = pooled.reshape(len(rois), -1)
    x = relu(x @ weights.get("rcnn.fc1.w") + weights.get("rcnn.fc1.b"))
    x = relu(x @ weights.get("rcnn.fc2.w") + weights.get("rcnn.fc2.b"))
    logits = (x @ weights.get("rcnn.cls.w") + weights.get("rcnn.cls.b"))[:, 0]
    residuals = x @ weights.get("rcnn.reg.w") + weights.get("rcnn.reg.b")
    return logits, residuals, pooled


def seg_forward(pooled: np.ndarray, weights: WeightStore) -> np.ndarray:
    """Per-grid-point foreground logits from pooled features: (N, G, G)."""
    n, g, _, c = pooled.shape
    x = pooled.reshape(-1, c)
    x = relu(x @ weights.get("rcnn.seg.fc1.w") + weights.get("rcnn.seg.fc1.b"))
    x = x @ weights.get("rcnn.seg.fc2.w") + weights.get("rcnn.seg.fc2.b")
    return x.reshape(n, g, g)


def confidence_target(iou: np.ndarray) -> np.ndarray:
    """IoU-derived soft label: 0 below 0.25, 1 above 0.75, linear between."""
    return np.clip(2.0 * np.asarray(iou) - 0.5, 0.0, 1.0)


def sample_proposals(proposals: list[Box3D], gt: list[Box3D], seed: int,
                     sample_size: int = 128, pos_iou: float = 0.55
                     ) -> SampledProposals:
    """Draw up to ``sample_size`` RoIs aiming for a 1:1 positive ratio.

    Positives overlap some ground-truth box with 3D IoU >= ``pos_iou`` and
    carry their best-IoU box for targets. When one pool is short, the
    other fills up to the cap. Selection uses only the seeded generator.
    """
    n = len(proposals)
    if n == 0 or not gt:
        iou = np.zeros(n)
        gt_idx = np.full(n, -1, dtype=np.int64)
    else:
        matrix = iou_3d_matrix(boxes_as_array(proposals), boxes_as_array(gt))
        iou = matrix.max(axis=1)
        gt_idx = matrix.argmax(axis=1)
    positive = iou >= pos_iou

    rng = np.random.default_rng(seed)
    pos_pool = np.nonzero(positive)[0]
    neg_pool = np.nonzero(~positive)[0]
    half = sample_size // 2
    take_pos = min(half, len(pos_pool))
    take_neg = min(sample_size - take_pos, len(neg_pool))
    if take_neg < half:
        take_pos = min(sample_size - take_neg, len(pos_pool))
    sel_pos = rng.permutation(pos_pool)[:take_pos]
    sel_neg = rng.permutation(neg_pool)[:take_neg]
    sel = np.concatenate([sel_pos, sel_neg]).astype(np.int64)

    rois = tuple(proposals[i] for i in sel)
    sel_iou = iou[sel]
    sel_pos_mask = positive[sel]
    sel_gt = np.where(sel_pos_mask, gt_idx[sel], -1)
    reg = np.zeros((len(sel), N_RESIDUALS))
    for row, (i, is_pos) in enumerate(zip(sel, sel_pos_mask)):
        if is_pos:
            reg[row] = encode_residuals(proposals[i], gt[gt_idx[i]])
    return SampledProposals(rois, sel_gt, sel_iou, sel_pos_mask,
                            confidence_target(sel_iou), reg)


def aux_seg_labels(roi: Box3D, gt: list[Box3D], grid_size: int) -> np.ndarray:
    """Binary foreground labels for each grid point of a RoI.

    A point is foreground iff it falls inside (boundary included) the BEV
    footprint of any ground-truth box; footprints never overlap, so labels
    are unambiguous.
    """
    pts = roi_grid_points(roi, grid_size)
    rects = [project_to_bev(g) for g in gt]
    labels = np.zeros((grid_size, grid_size))
    for i in range(grid_size):
        for j in range(grid_size):
            p = (pts[i, j, 0], pts[i, j, 1])
            if any(point_in_rect(p, r) for r in rects):
                labels[i, j] = 1.0
    return labels


def _bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    return (np.maximum(logits, 0.0) - logits * targets
            + np.log1p(np.exp(-np.abs(logits))))


def _smooth_l1(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


@dataclass(frozen=True)
class RcnnLossParts:
    confidence: float
    regression: float
    seg: float


def rcnn_loss(conf_logits: np.ndarray, residuals: np.ndarray,
              seg_logits: np.ndarray, batch: SampledProposals,
              seg_labels: np.ndarray) -> RcnnLossParts:
    """Confidence BCE over every sampled RoI, smooth-L1 regression over
    positives (normalized by their count), BCE segmentation over all grid
    points of all sampled RoIs."""
    n = len(batch)
    if n == 0:
        return RcnnLossParts(0.0, 0.0, 0.0)
    conf = float(_bce_with_logits(conf_logits, batch.confidence_target).mean())
    n_pos = int(np.count_nonzero(batch.positive))
    if n_pos:
        diff = residuals[batch.positive] - batch.regression_target[batch.positive]
        reg = float(_smooth_l1(diff).sum()) / n_pos
    else:
        reg = 0.0
    seg = float(_bce_with_logits(seg_logits, seg_labels).mean())
    return RcnnLossParts(conf, reg, seg)


@dataclass(frozen=True)
class LossReport:
    """Total training loss and its components.

    ``total`` is the plain sum rpn (in ascending stride order) + rcnn +
    seg with equal weights and no hidden scaling; ``rcnn`` is confidence
    plus regression.
    """

    rpn: dict[int, float]
    rcnn_confidence: float
    rcnn_regression: float
    rcnn: float
    seg: float
    total: float

    @classmethod
    def build(cls, rpn: dict[int, float],
              rcnn_parts: RcnnLossParts) -> "LossReport":
        rcnn = rcnn_parts.confidence + rcnn_parts.regression
        total = sum(rpn[s] for s in sorted(rpn)) + rcnn + rcnn_parts.seg
        return cls(dict(rpn), rcnn_parts.confidence, rcnn_parts.regression,
                   rcnn, rcnn_parts.seg, total)


def refine(proposals: list[Detection], m: DenseFeatureMap, spec: GridSpec,
           weights: WeightStore, cfg: RoiPoolConfig) -> list[Detection]:
    """Decode residuals onto the proposals and rescore with the MLP head."""
    if not proposals:
        return []
    boxes = [d.box for d in proposals]
    logits, residuals, _ = rcnn_forward(boxes, m, spec, weights, cfg)
    out = []
    for d, logit, r in zip(proposals, logits, residuals):
        refined = decode_residuals(d.box, r)
        score = float(_sigmoid(logit))
        out.append(Detection(refined, d.class_id, score,
                             iou_score=d.iou_score, rectified_score=score))
    return out
