"""Brute-force reference implementations used to validate the fast paths.

Each oracle is deliberately naive and structurally independent of the code
it checks: Monte-Carlo sampling instead of polygon clipping, per-pixel
loops instead of shift-and-matmul, a full pairwise matrix instead of lazy
IoU evaluation, finite differences instead of analytic gradients. All are
deterministic given a seed.
"""

from __future__ import annotations

import numpy as np

from .geometry import RotatedRect2D


def mc_rotated_iou(a: RotatedRect2D, b: RotatedRect2D,
                   samples: int = 1_000_000, seed: int = 0) -> float:
    """Monte-Carlo IoU of two rotated rects.

    Uniform samples are drawn over the joint axis-aligned bounding box and
    IoU is estimated as hits-in-both / hits-in-either, which is exact for
    identical rects. Standard error at 10^6 samples is on the order of
    1e-3 for moderately overlapping rects.
    """
    corners = np.array(a.corners() + b.corners())
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)
    rng = np.random.default_rng(seed)
    # float32 keeps the hot loop memory-bound ops cheap; its rounding is
    # orders of magnitude below the Monte-Carlo noise floor
    x = rng.random(samples, dtype=np.float32)
    x *= np.float32(hi[0] - lo[0])
    x += np.float32(lo[0])
    y = rng.random(samples, dtype=np.float32)
    y *= np.float32(hi[1] - lo[1])
    y += np.float32(lo[1])

    def inside(rect: RotatedRect2D) -> np.ndarray:
        c = np.float32(np.cos(rect.yaw))
        s = np.float32(np.sin(rect.yaw))
        dx = x - np.float32(rect.cx)
        dy = y - np.float32(rect.cy)
        lx = c * dx
        lx += s * dy
        np.abs(lx, out=lx)
        hit = lx <= np.float32(0.5 * rect.length)
        dx *= -s
        dy *= c
        dx += dy
        np.abs(dx, out=dx)
        hit &= dx <= np.float32(0.5 * rect.width)
        return hit

    in_a = inside(a)
    in_b = inside(b)
    both = np.count_nonzero(in_a & in_b)
    in_a |= in_b
    either = np.count_nonzero(in_a)
    if either == 0:
        return 0.0
    return both / either


def dense_conv_reference(data: np.ndarray, weight: np.ndarray,
                         stride: int = 1) -> np.ndarray:
    """Per-output-pixel 3x3 convolution with zero padding 1 (no bias)."""
    h, w_in, c_in = data.shape
    c_out = weight.shape[3]
    h_out = (h - 1) // stride + 1
    w_out = (w_in - 1) // stride + 1
    padded = np.zeros((h + 2, w_in + 2, c_in))
    padded[1:-1, 1:-1] = data
    out = np.empty((h_out, w_out, c_out))
    for oy in range(h_out):
        for ox in range(w_out):
            window = padded[oy * stride:oy * stride + 3,
                            ox * stride:ox * stride + 3]
            out[oy, ox] = np.tensordot(window, weight, axes=([0, 1, 2], [0, 1, 2]))
    return out


def exhaustive_nms(dets, iou_thresholds: dict[int, float], iou_fn,
                   score_fn=None) -> list:
    """Greedy per-class NMS computed from the full pairwise IoU matrix.

    ``dets`` is any sequence with ``box`` and ``class_id`` attributes;
    ``iou_fn`` computes scalar 3D IoU between two boxes. Ordering is by
    descending ``score_fn`` with ties broken by earlier input index.
    """
    if score_fn is None:
        score_fn = lambda d: d.rectified_score
    kept: list = []
    by_class: dict[int, list[int]] = {}
    for i, d in enumerate(dets):
        by_class.setdefault(d.class_id, []).append(i)
    for class_id in sorted(by_class):
        idx = by_class[class_id]
        thr = iou_thresholds[class_id]
        n = len(idx)
        iou = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                iou[i, j] = iou[j, i] = iou_fn(dets[idx[i]].box, dets[idx[j]].box)
        order = sorted(range(n), key=lambda i: (-score_fn(dets[idx[i]]), idx[i]))
        alive = [True] * n
        for pos, i in enumerate(order):
            if not alive[i]:
                continue
            kept.append(idx[i])
            for j in order[pos + 1:]:
                if alive[j] and iou[i, j] > thr:
                    alive[j] = False
    kept_set = set(kept)
    order_all = sorted(kept_set,
                       key=lambda i: (-score_fn(dets[i]), i))
    return [dets[i] for i in order_all]


def finite_difference_grad(f, x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Central finite differences of scalar ``f`` w.r.t. every entry of x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.copy().reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        fp = f(xf.reshape(x.shape))
        xf[i] = orig - h
        fm = f(xf.reshape(x.shape))
        xf[i] = orig
        flat[i] = (fp - fm) / (2.0 * h)
    return grad
