"""Oriented-box geometry on the BEV plane and in 3D.

Boxes live in a right-handed world frame: x/y span the ground plane, z is
up, yaw rotates counter-clockwise about z. All operations are pure and all
types are immutable, so everything here is safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Vertices closer than this are merged before polygon areas are taken, so
# collinear leftovers from clipping cannot produce spurious edges.
_DEGENERATE_EPS = 1e-9


def normalize_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.remainder(angle, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    return a


def heading_delta(a: float, b: float) -> float:
    """Absolute heading difference in [0, pi]."""
    d = abs(math.remainder(a - b, TWO_PI))
    return min(d, TWO_PI - d)


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box: center, extents and heading.

    ``num_points`` is only meaningful for ground truth (0 for predictions).
    Yaw is normalized into (-pi, pi] at construction; extents must be
    strictly positive.
    """

    cx: float
    cy: float
    cz: float
    length: float
    width: float
    height: float
    yaw: float
    class_id: int = 0
    num_points: int = 0

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0 and self.height > 0):
            raise ValueError(
                f"box extents must be positive, got "
                f"({self.length}, {self.width}, {self.height})"
            )
        if self.num_points < 0:
            raise ValueError("num_points must be non-negative")
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def z_bottom(self) -> float:
        return self.cz - 0.5 * self.height

    @property
    def z_top(self) -> float:
        return self.cz + 0.5 * self.height

    @property
    def volume(self) -> float:
        return self.length * self.width * self.height

    @property
    def bev_diagonal(self) -> float:
        return math.hypot(self.length, self.width)


@dataclass(frozen=True)
class RotatedRect2D:
    """Rotated rectangle on the BEV plane."""

    cx: float
    cy: float
    length: float
    width: float
    yaw: float

    @property
    def area(self) -> float:
        return self.length * self.width

    def corners(self) -> list[tuple[float, float]]:
        """Four corners in counter-clockwise order."""
        hl, hw = 0.5 * self.length, 0.5 * self.width
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        out = []
        for lx, ly in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)):
            out.append((self.cx + c * lx - s * ly, self.cy + s * lx + c * ly))
        return out


def project_to_bev(box: Box3D) -> RotatedRect2D:
    """Drop z and height, keeping the BEV footprint of the box."""
    return RotatedRect2D(box.cx, box.cy, box.length, box.width, box.yaw)


def point_in_rect(p: tuple[float, float], rect: RotatedRect2D) -> bool:
    """True iff ``p`` lies inside or on the boundary of ``rect``.

    The point is rotated into the rect frame and compared against the
    half-extents; boundary points count as inside so downstream labels
    are deterministic.
    """
    dx = p[0] - rect.cx
    dy = p[1] - rect.cy
    c, s = math.cos(rect.yaw), math.sin(rect.yaw)
    local_x = c * dx + s * dy
    local_y = -s * dx + c * dy
    return abs(local_x) <= 0.5 * rect.length and abs(local_y) <= 0.5 * rect.width


def _clip_polygon(poly: list[tuple[float, float]],
                  clip: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clip of ``poly`` against convex CCW ``clip``."""
    out = poly
    n_clip = len(clip)
    for e in range(n_clip):
        if not out:
            return []
        ex1, ey1 = clip[e]
        ex2, ey2 = clip[(e + 1) % n_clip]
        ax, ay = ex2 - ex1, ey2 - ey1
        inp = out
        out = []
        n = len(inp)
        # signed cross product with the edge; >= 0 is the inside half-plane
        sides = [ax * (inp[i][1] - ey1) - ay * (inp[i][0] - ex1) for i in range(n)]
        for i in range(n):
            cur = inp[i]
            nxt = inp[(i + 1) % n]
            s_cur = sides[i]
            s_nxt = sides[(i + 1) % n]
            if s_cur >= 0.0:
                out.append(cur)
            if (s_cur > 0.0 and s_nxt < 0.0) or (s_cur < 0.0 and s_nxt > 0.0):
                t = s_cur / (s_cur - s_nxt)
                out.append((cur[0] + t * (nxt[0] - cur[0]),
                            cur[1] + t * (nxt[1] - cur[1])))
    return out


def _dedupe_vertices(poly: list[tuple[float, float]]) -> list[tuple[float, float]]:
    if len(poly) < 2:
        return poly
    out = []
    for p in poly:
        if not out or math.hypot(p[0] - out[-1][0], p[1] - out[-1][1]) > _DEGENERATE_EPS:
            out.append(p)
    if len(out) > 1 and math.hypot(out[0][0] - out[-1][0], out[0][1] - out[-1][1]) <= _DEGENERATE_EPS:
        out.pop()
    return out


def polygon_area(poly: list[tuple[float, float]]) -> float:
    """Shoelace area of a simple polygon (absolute value)."""
    poly = _dedupe_vertices(poly)
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        acc += x1 * y2 - x2 * y1
    return 0.5 * abs(acc)


def rect_intersection_area(a: RotatedRect2D, b: RotatedRect2D) -> float:
    """Intersection area of two rotated rectangles via convex clipping.

    Operands are put in a canonical order first so the result is exactly
    symmetric (bit-identical) under argument swap.
    """
    if a.area <= 0.0 or b.area <= 0.0:
        return 0.0
    if (b.cx, b.cy, b.length, b.width, b.yaw) < (a.cx, a.cy, a.length, a.width, a.yaw):
        a, b = b, a
    return polygon_area(_clip_polygon(a.corners(), b.corners()))


def rotated_iou_bev(a: RotatedRect2D, b: RotatedRect2D) -> float:
    """IoU of two rotated rectangles on the BEV plane, in [0, 1]."""
    area_a, area_b = a.area, b.area
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    inter = rect_intersection_area(a, b)
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    # clamp away tiny clipping noise just above 1
    return min(1.0, inter / union)


def iou_3d(a: Box3D, b: Box3D) -> float:
    """3D IoU: rotated BEV intersection times vertical overlap."""
    inter_bev = rect_intersection_area(project_to_bev(a), project_to_bev(b))
    if inter_bev <= 0.0:
        return 0.0
    z_overlap = min(a.z_top, b.z_top) - max(a.z_bottom, b.z_bottom)
    if z_overlap <= 0.0:
        return 0.0
    inter = inter_bev * z_overlap
    union = a.volume + b.volume - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, inter / union)


# --------------------------------------------------------------------------
# Batched variants. Same clipping algorithm as the scalar path, vectorized
# over pairs with a padded-vertex representation; used where per-pair Python
# overhead would dominate (proposal sampling, bulk scoring).
# --------------------------------------------------------------------------


def boxes_as_array(boxes: Sequence[Box3D]) -> np.ndarray:
    """Pack boxes into an (N, 7) float array [cx, cy, cz, l, w, h, yaw]."""
    out = np.empty((len(boxes), 7), dtype=np.float64)
    for i, b in enumerate(boxes):
        out[i] = (b.cx, b.cy, b.cz, b.length, b.width, b.height, b.yaw)
    return out


def rect_corners_batch(rects: np.ndarray) -> np.ndarray:
    """Corners of (N, 5) rects [cx, cy, l, w, yaw] as (N, 4, 2), CCW."""
    cx, cy, length, width, yaw = (rects[:, i] for i in range(5))
    hl, hw = 0.5 * length, 0.5 * width
    c, s = np.cos(yaw), np.sin(yaw)
    local = np.stack([
        np.stack([hl, hw], axis=-1),
        np.stack([-hl, hw], axis=-1),
        np.stack([-hl, -hw], axis=-1),
        np.stack([hl, -hw], axis=-1),
    ], axis=1)  # (N, 4, 2)
    x = cx[:, None] + c[:, None] * local[..., 0] - s[:, None] * local[..., 1]
    y = cy[:, None] + s[:, None] * local[..., 0] + c[:, None] * local[..., 1]
    return np.stack([x, y], axis=-1)


def _clip_batch(poly: np.ndarray, count: np.ndarray,
                p1: np.ndarray, p2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clip padded polygons (B, V, 2) against one half-plane per row."""
    n_batch, n_vert = poly.shape[:2]
    idx = np.arange(n_vert)
    safe = np.maximum(count, 1)
    nxt_idx = (idx[None, :] + 1) % safe[:, None]
    edge = p2 - p1
    rel = poly - p1[:, None, :]
    side = edge[:, None, 0] * rel[..., 1] - edge[:, None, 1] * rel[..., 0]
    side_nxt = np.take_along_axis(side, nxt_idx, axis=1)
    nxt = np.take_along_axis(poly, nxt_idx[..., None], axis=1)

    valid = idx[None, :] < count[:, None]
    emit_cur = valid & (side >= 0.0)
    crossing = valid & (((side > 0.0) & (side_nxt < 0.0))
                        | ((side < 0.0) & (side_nxt > 0.0)))
    denom = np.where(crossing, side - side_nxt, 1.0)
    t = np.where(crossing, side / denom, 0.0)
    inter = poly + t[..., None] * (nxt - poly)

    pts = np.stack([poly, inter], axis=2).reshape(n_batch, 2 * n_vert, 2)
    mask = np.stack([emit_cur, crossing], axis=2).reshape(n_batch, 2 * n_vert)
    new_count = mask.sum(axis=1)

    out = np.zeros((n_batch, n_vert + 1, 2), dtype=poly.dtype)
    b_idx, slot = np.nonzero(mask)
    pos = np.cumsum(mask, axis=1)[b_idx, slot] - 1
    out[b_idx, pos] = pts[b_idx, slot]
    return out, new_count


def _polygon_area_batch(poly: np.ndarray, count: np.ndarray) -> np.ndarray:
    n_batch, n_vert = poly.shape[:2]
    idx = np.arange(n_vert)
    safe = np.maximum(count, 1)
    nxt_idx = (idx[None, :] + 1) % safe[:, None]
    nxt = np.take_along_axis(poly, nxt_idx[..., None], axis=1)
    cross = poly[..., 0] * nxt[..., 1] - nxt[..., 0] * poly[..., 1]
    cross = np.where(idx[None, :] < count[:, None], cross, 0.0)
    area = 0.5 * np.abs(cross.sum(axis=1))
    return np.where(count >= 3, area, 0.0)


def rect_intersection_area_batch(rects_a: np.ndarray,
                                 rects_b: np.ndarray) -> np.ndarray:
    """Pairwise intersection areas for aligned (N, 5) rect arrays."""
    poly = rect_corners_batch(rects_a)
    count = np.full(len(rects_a), 4, dtype=np.int64)
    clip = rect_corners_batch(rects_b)
    for e in range(4):
        poly, count = _clip_batch(poly, count, clip[:, e], clip[:, (e + 1) % 4])
    return _polygon_area_batch(poly, count)


def iou_3d_pairs(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Elementwise 3D IoU of aligned (N, 7) box arrays."""
    rect_cols = [0, 1, 3, 4, 6]
    inter_bev = rect_intersection_area_batch(boxes_a[:, rect_cols],
                                             boxes_b[:, rect_cols])
    top = np.minimum(boxes_a[:, 2] + 0.5 * boxes_a[:, 5],
                     boxes_b[:, 2] + 0.5 * boxes_b[:, 5])
    bot = np.maximum(boxes_a[:, 2] - 0.5 * boxes_a[:, 5],
                     boxes_b[:, 2] - 0.5 * boxes_b[:, 5])
    inter = inter_bev * np.maximum(0.0, top - bot)
    vol_a = boxes_a[:, 3] * boxes_a[:, 4] * boxes_a[:, 5]
    vol_b = boxes_b[:, 3] * boxes_b[:, 4] * boxes_b[:, 5]
    union = vol_a + vol_b - inter
    iou = np.where(union > 0.0, inter / np.maximum(union, 1e-300), 0.0)
    return np.clip(iou, 0.0, 1.0)


def iou_3d_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Full (N, M) 3D IoU matrix between two (·, 7) box arrays."""
    n, m = len(boxes_a), len(boxes_b)
    if n == 0 or m == 0:
        return np.zeros((n, m), dtype=np.float64)
    a = np.repeat(boxes_a, m, axis=0)
    b = np.tile(boxes_b, (n, 1))
    return iou_3d_pairs(a, b).reshape(n, m)
