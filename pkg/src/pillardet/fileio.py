"""On-disk formats: point clouds, weight archives, boxes and detections.

Binary layouts are little-endian throughout. Point clouds use magic
``PBK1``: a u32 point count followed by count x 4 f32 (x, y, z,
intensity). Weight archives use magic ``PWT1``: a u32 tensor count, then
per tensor a u16 name length, the UTF-8 name, a u8 rank, rank u32 dims,
and the f32 payload. Ground truth and detections are line-oriented text
with six decimal places. All writers go through a temp-file rename so
readers never observe partial files.
"""

from __future__ import annotations

import os
import struct
import tempfile
from typing import Sequence

import numpy as np

from .geometry import Box3D
from .grid import PointCloud
from .rpn import Detection
from .weights import WeightStore

POINT_CLOUD_MAGIC = b"PBK1"
WEIGHTS_MAGIC = b"PWT1"


class FormatError(ValueError):
    """Raised when a file fails structural validation."""


def atomic_write_bytes(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# -- point clouds -----------------------------------------------------------


def save_point_cloud(path: str, cloud: PointCloud) -> None:
    payload = (POINT_CLOUD_MAGIC + struct.pack("<I", len(cloud))
               + cloud.data.astype("<f4").tobytes())
    atomic_write_bytes(path, payload)


def load_point_cloud(path: str) -> PointCloud:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != POINT_CLOUD_MAGIC:
        raise FormatError(f"{path}: bad point-cloud magic {blob[:4]!r}")
    if len(blob) < 8:
        raise FormatError(f"{path}: truncated header")
    (count,) = struct.unpack_from("<I", blob, 4)
    expected = 8 + count * 16
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=8).reshape(count, 4)
    return PointCloud(data.astype(np.float64))


# -- weight archives --------------------------------------------------------


def save_weights(path: str, store: WeightStore) -> None:
    parts = [WEIGHTS_MAGIC, struct.pack("<I", len(store.names()))]
    for name in store.names():
        arr = store.get(name)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f4").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def load_weights(path: str) -> WeightStore:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: bad weight-archive magic {blob[:4]!r}")
    (count,) = struct.unpack_from("<I", blob, 4)
    offset = 8
    tensors: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(blob, dtype="<f4", count=size, offset=offset)
            offset += 4 * size
            tensors[name] = arr.reshape(dims).astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated weight archive") from exc
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")
    return WeightStore(tensors)


# -- ground-truth boxes -----------------------------------------------------


def format_gt(boxes: Sequence[Box3D]) -> str:
    lines = []
    for b in boxes:
        lines.append(f"{b.class_id} {b.cx:.6f} {b.cy:.6f} {b.cz:.6f} "
                     f"{b.length:.6f} {b.width:.6f} {b.height:.6f} "
                     f"{b.yaw:.6f} {b.num_points}")
    return "".join(line + "\n" for line in lines)


def save_gt(path: str, boxes: Sequence[Box3D]) -> None:
    atomic_write_text(path, format_gt(boxes))


def load_gt(path: str) -> list[Box3D]:
    boxes = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 9:
                raise FormatError(f"{path}:{line_no}: expected 9 fields, "
                                  f"got {len(fields)}")
            boxes.append(Box3D(*(float(v) for v in fields[1:8]),
                               class_id=int(fields[0]),
                               num_points=int(fields[8])))
    return boxes


# -- detections -------------------------------------------------------------


def format_detections(dets: Sequence[Detection]) -> str:
    lines = []
    for d in dets:
        b = d.box
        lines.append(f"{d.class_id} {b.cx:.6f} {b.cy:.6f} {b.cz:.6f} "
                     f"{b.length:.6f} {b.width:.6f} {b.height:.6f} "
                     f"{b.yaw:.6f} {d.score:.6f} {d.iou_score:.6f} "
                     f"{d.rectified_score:.6f}")
    return "".join(line + "\n" for line in lines)


def save_detections(path: str, dets: Sequence[Detection]) -> None:
    atomic_write_text(path, format_detections(dets))


def load_detections(path: str) -> list[Detection]:
    dets = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 11:
                raise FormatError(f"{path}:{line_no}: expected 11 fields, "
                                  f"got {len(fields)}")
            box = Box3D(*(float(v) for v in fields[1:8]),
                        class_id=int(fields[0]))
            dets.append(Detection(box, int(fields[0]), float(fields[8]),
                                  float(fields[9]), float(fields[10])))
    return dets
