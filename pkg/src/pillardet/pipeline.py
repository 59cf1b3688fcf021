"""End-to-end detection: points in, refined scored boxes out.

Stage order: pillarize -> backbone -> pyramid -> center heads -> proposal
decoding -> IoU-aware rescoring -> NMS -> pooling map -> RoI refinement.
Every produced map's dims are asserted against the grid arithmetic
(dims = cells / stride) so a wiring mistake fails loudly instead of
producing plausible nonsense.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from . import fileio
from .config import PipelineConfig, weight_layout
from .fpn import build_pooling_map, build_pyramid
from .grid import PointCloud, backbone_forward, pillarize
from .rcnn import RoiPoolConfig, refine
from .rpn import (Detection, decode_proposals, nms_3d, rectify_detections,
                  rpn_forward)
from .weights import WeightStore


class ShapeContractError(RuntimeError):
    """A stage produced a map whose dims contradict the grid arithmetic."""


@dataclass(frozen=True)
class PipelineResult:
    detections: list[Detection]
    proposals: list[Detection]          # post-NMS, pre-refinement
    shapes: dict[str, tuple[int, int]]  # stage name -> (height, width)
    timings: dict[str, float]           # stage name -> seconds


def build_weights(config: PipelineConfig) -> WeightStore:
    """Load the configured archive or fall back to seeded initialization."""
    layout = weight_layout(config)
    if config.weights_path is not None:
        store = fileio.load_weights(config.weights_path)
        store.validate(layout)
        return store
    return WeightStore.seeded(layout, config.seed)


class DetectionPipeline:
    """Holds config plus weights; ``run`` is pure and reusable per scene."""

    def __init__(self, config: PipelineConfig,
                 weights: WeightStore | None = None):
        self.config = config
        self.weights = weights if weights is not None else build_weights(config)
        self.weights.validate(weight_layout(config))

    def run(self, cloud: PointCloud) -> PipelineResult:
        cfg = self.config
        spec = cfg.grid
        shapes: dict[str, tuple[int, int]] = {}
        timings: dict[str, float] = {}

        def clock(name, fn):
            t0 = time.perf_counter()
            out = fn()
            timings[name] = time.perf_counter() - t0
            return out

        volume = clock("pillarize", lambda: pillarize(cloud, spec, self.weights))
        backbone = clock("backbone", lambda: backbone_forward(
            volume, self.weights, cfg.backbone_channels))
        shapes["C3"] = (backbone.c3.ny, backbone.c3.nx)
        shapes["C4"] = (backbone.c4.ny, backbone.c4.nx)
        shapes["C5"] = (backbone.c5.height, backbone.c5.width)
        pyramid = clock("pyramid", lambda: build_pyramid(backbone, self.weights))
        shapes["P3"] = (pyramid[4].height, pyramid[4].width)
        shapes["P4"] = (pyramid[8].height, pyramid[8].width)
        heads = clock("heads", lambda: rpn_forward(
            pyramid, self.weights, cfg.level_classes, cfg.head_channels))
        # a cloud with no occupied pillar carries no evidence; bias
        # propagation still texture-fills the maps, so gate the decode
        proposals = clock("decode", lambda: decode_proposals(
            heads, spec, cfg.top_k) if volume.n_active else [])
        proposals = clock("rectify", lambda: rectify_detections(
            proposals, cfg.beta))
        proposals = clock("nms", lambda: nms_3d(proposals, cfg.nms_iou))
        pooling_map = clock("pooling_map", lambda: build_pooling_map(
            backbone, pyramid, self.weights, cfg.pool_stride,
            cfg.bottom_up_strides, cfg.use_pool_bottom_up))
        shapes["pool"] = (pooling_map.height, pooling_map.width)
        roi_cfg = RoiPoolConfig(cfg.roi_grid_size, cfg.pool_stride,
                                cfg.mlp_channels, cfg.seg_hidden)
        detections = clock("refine", lambda: refine(
            proposals, pooling_map, spec, self.weights, roi_cfg))

        _assert_shapes(shapes, spec, cfg.pool_stride)
        return PipelineResult(detections, proposals, shapes, timings)


def _assert_shapes(shapes: dict[str, tuple[int, int]], spec,
                   pool_stride: int) -> None:
    expected = {
        "C3": 4, "C4": 8, "C5": 16, "P3": 4, "P4": 8, "pool": pool_stride,
    }
    for name, stride in expected.items():
        want = (spec.ny // stride, spec.nx // stride)
        if shapes[name] != want:
            raise ShapeContractError(
                f"{name} dims {shapes[name]} != expected {want} "
                f"(grid {spec.ny}x{spec.nx} / stride {stride})"
            )


def format_shapes(shapes: dict[str, tuple[int, int]]) -> str:
    return " ".join(f"{k}={h}x{w}" for k, (h, w) in shapes.items())
