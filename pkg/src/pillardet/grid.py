"""Pillar grids and the hybrid sparse/dense BEV feature hierarchy.

Point clouds are collapsed into a sparse set of occupied BEV pillars; the
backbone then runs four sparse stages and one dense stage, producing
feature volumes/maps at strides 1, 2, 4, 8, 16 in a single forward pass.
Everything is forward-only: weights come from a store (or a seeded
initializer), never from training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .weights import WeightStore


@dataclass(frozen=True)
class GridSpec:
    """Detection range plus base pillar size.

    The x/y spans must be integer multiples of ``pillar_size``. Cells are
    half-open ``[lo, hi)`` along every axis, so points exactly at a max
    bound are dropped.
    """

    x_min: float = -75.2
    x_max: float = 75.2
    y_min: float = -75.2
    y_max: float = 75.2
    z_min: float = -2.0
    z_max: float = 4.0
    pillar_size: float = 0.1

    def __post_init__(self):
        if self.pillar_size <= 0:
            raise ValueError("pillar_size must be positive")
        for name, lo, hi in (("x", self.x_min, self.x_max),
                             ("y", self.y_min, self.y_max),
                             ("z", self.z_min, self.z_max)):
            if not hi > lo:
                raise ValueError(f"{name} range is empty: [{lo}, {hi})")
        for name, span in (("x", self.x_max - self.x_min),
                           ("y", self.y_max - self.y_min)):
            cells = span / self.pillar_size
            if abs(cells - round(cells)) > 1e-6:
                raise ValueError(
                    f"{name} span {span} is not an integer number of pillars "
                    f"of size {self.pillar_size}"
                )

    @property
    def nx(self) -> int:
        return round((self.x_max - self.x_min) / self.pillar_size)

    @property
    def ny(self) -> int:
        return round((self.y_max - self.y_min) / self.pillar_size)

    def cell_size(self, stride: int = 1) -> float:
        return self.pillar_size * stride


class PointCloud:
    """Immutable (N, 4) cloud of [x, y, z, intensity] points."""

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != 4:
            raise ValueError(f"expected (N, 4) point array, got {data.shape}")
        if data.size and not np.all(np.isfinite(data)):
            raise ValueError("point cloud contains non-finite values")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def __setattr__(self, *a):
        raise AttributeError("PointCloud is immutable")

    def __len__(self) -> int:
        return len(self.data)

    @property
    def xyz(self) -> np.ndarray:
        return self.data[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.data[:, 3]

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 4)))


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SparsePillarVolume:
    """Active pillar sites at one stride.

    ``coords`` is (N, 2) int64 of unique (ix, iy) cell indices, sorted
    lexicographically by ix then iy; ``features`` is the aligned (N, C)
    float array. ``nx``/``ny`` are the grid dims at this stride.
    """

    stride: int
    nx: int
    ny: int
    coords: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 2)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or len(feats) != len(coords):
            raise ValueError("features must be (N, C) aligned with coords")
        if len(coords):
            keys = coords[:, 0] * self.ny + coords[:, 1]
            if np.any(np.diff(keys) <= 0):
                raise ValueError("coords must be unique and sorted by (ix, iy)")
            if (coords.min() < 0 or coords[:, 0].max() >= self.nx
                    or coords[:, 1].max() >= self.ny):
                raise ValueError("coords out of grid bounds")
        object.__setattr__(self, "coords", _freeze(coords))
        object.__setattr__(self, "features", _freeze(feats))

    @property
    def n_active(self) -> int:
        return len(self.coords)

    @property
    def channels(self) -> int:
        return self.features.shape[1]

    def keys(self) -> np.ndarray:
        """Flat sort keys ix * ny + iy."""
        return self.coords[:, 0] * self.ny + self.coords[:, 1]

    @classmethod
    def empty(cls, stride: int, nx: int, ny: int, channels: int) -> "SparsePillarVolume":
        return cls(stride, nx, ny, np.zeros((0, 2), np.int64),
                   np.zeros((0, channels)))


@dataclass(frozen=True)
class DenseFeatureMap:
    """Dense H x W x C feature grid, row-major, origin at (x_min, y_min).

    Row index is the y cell, column index the x cell, matching
    ``SparsePillarVolume`` coordinates through :func:`densify`.
    """

    stride: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"expected (H, W, C) data, got shape {data.shape}")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def pillarize(points: PointCloud, spec: GridSpec,
              weights: WeightStore) -> SparsePillarVolume:
    """Collapse a point cloud into stride-1 pillar features.

    Each in-range point is encoded as [x - cell_center_x, y - cell_center_y,
    z, intensity], pushed through one linear layer + ReLU, and max-pooled
    over its cell. Unoccupied cells stay implicit. The max makes the result
    independent of point order.
    """
    nx, ny = spec.nx, spec.ny
    w = weights.get("pfe.linear.w")
    b = weights.get("pfe.linear.b")
    channels = w.shape[1]

    data = points.data
    if len(data) == 0:
        return SparsePillarVolume.empty(1, nx, ny, channels)

    x, y, z = data[:, 0], data[:, 1], data[:, 2]
    keep = ((x >= spec.x_min) & (x < spec.x_max)
            & (y >= spec.y_min) & (y < spec.y_max)
            & (z >= spec.z_min) & (z < spec.z_max))
    data = data[keep]
    if len(data) == 0:
        return SparsePillarVolume.empty(1, nx, ny, channels)

    p = spec.pillar_size
    ix = np.floor((data[:, 0] - spec.x_min) / p).astype(np.int64)
    iy = np.floor((data[:, 1] - spec.y_min) / p).astype(np.int64)
    # floor of the division can land on the boundary cell through rounding
    ix = np.clip(ix, 0, nx - 1)
    iy = np.clip(iy, 0, ny - 1)

    enc_in = np.stack([
        data[:, 0] - (spec.x_min + (ix + 0.5) * p),
        data[:, 1] - (spec.y_min + (iy + 0.5) * p),
        data[:, 2],
        data[:, 3],
    ], axis=1)
    enc = relu(enc_in @ w + b)

    key = ix * ny + iy
    order = np.argsort(key, kind="stable")
    key_sorted = key[order]
    enc = enc[order]
    uniq, starts = np.unique(key_sorted, return_index=True)
    pooled = np.maximum.reduceat(enc, starts, axis=0)
    coords = np.stack([uniq // ny, uniq % ny], axis=1)
    return SparsePillarVolume(1, nx, ny, coords, pooled)


def _out_dim(n: int, stride: int) -> int:
    # 3x3 kernel with zero padding 1
    return (n - 1) // stride + 1


def sparse_conv2d(v: SparsePillarVolume, weight: np.ndarray, bias: np.ndarray,
                  stride: int = 1, submanifold: bool = False) -> SparsePillarVolume:
    """3x3 sparse convolution with zero padding.

    Submanifold mode keeps the active set identical to the input (stride
    must be 1). Regular mode activates every output site that receives at
    least one contribution under the strided window. Bias applies at active
    output sites only; inactive sites remain implicit zeros.
    """
    if weight.shape[:2] != (3, 3) or weight.shape[2] != v.channels:
        raise ValueError(
            f"kernel shape {weight.shape} incompatible with {v.channels} input channels"
        )
    if submanifold and stride != 1:
        raise ValueError("submanifold convolution requires stride 1")
    if stride not in (1, 2):
        raise ValueError(f"unsupported stride {stride}")

    c_out = weight.shape[3]
    nx_out, ny_out = _out_dim(v.nx, stride), _out_dim(v.ny, stride)
    ix, iy = v.coords[:, 0], v.coords[:, 1]

    if submanifold:
        out_coords = v.coords
        out_keys = v.keys()
    else:
        cand = []
        for ky in range(3):
            for kx in range(3):
                ox_num = ix + 1 - kx
                oy_num = iy + 1 - ky
                ok = (ox_num % stride == 0) & (oy_num % stride == 0)
                ox = ox_num // stride
                oy = oy_num // stride
                ok &= (ox >= 0) & (ox < nx_out) & (oy >= 0) & (oy < ny_out)
                cand.append(ox[ok] * ny_out + oy[ok])
        out_keys = (np.unique(np.concatenate(cand)) if v.n_active
                    else np.zeros(0, np.int64))
        out_coords = np.stack([out_keys // ny_out, out_keys % ny_out], axis=1)

    out_feats = np.zeros((len(out_keys), c_out))
    for ky in range(3):
        for kx in range(3):
            ox_num = ix + 1 - kx
            oy_num = iy + 1 - ky
            ok = (ox_num % stride == 0) & (oy_num % stride == 0)
            ox = ox_num // stride
            oy = oy_num // stride
            ok &= (ox >= 0) & (ox < nx_out) & (oy >= 0) & (oy < ny_out)
            if not np.any(ok):
                continue
            key = ox[ok] * ny_out + oy[ok]
            pos = np.searchsorted(out_keys, key)
            if submanifold:
                hit = (pos < len(out_keys))
                hit[hit] = out_keys[pos[hit]] == key[hit]
            else:
                hit = np.ones(len(key), dtype=bool)  # candidates are active by construction
            if not np.any(hit):
                continue
            # per offset the input -> output map is injective, plain add is safe
            contrib = v.features[ok][hit] @ weight[ky, kx]
            out_feats[pos[hit]] += contrib
    if len(out_keys):
        out_feats += bias
    return SparsePillarVolume(stride * v.stride, nx_out, ny_out,
                              out_coords, out_feats)


def densify(v: SparsePillarVolume) -> DenseFeatureMap:
    """Scatter active sites into a zero-initialized dense map."""
    data = np.zeros((v.ny, v.nx, v.channels))
    if v.n_active:
        data[v.coords[:, 1], v.coords[:, 0]] = v.features
    return DenseFeatureMap(v.stride, data)


def sparsify(m: DenseFeatureMap, threshold: float = 0.0) -> SparsePillarVolume:
    """Active sites of a dense map: cells with any |feature| > threshold."""
    mask = np.any(np.abs(m.data) > threshold, axis=-1)
    iy, ix = np.nonzero(mask)
    order = np.lexsort((iy, ix))
    coords = np.stack([ix[order], iy[order]], axis=1)
    return SparsePillarVolume(m.stride, m.width, m.height, coords,
                              m.data[iy[order], ix[order]])


def dense_conv2d(data: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                 stride: int = 1) -> np.ndarray:
    """Dense 3x3 convolution, zero padding 1, via shift-and-matmul."""
    h, w_in, c_in = data.shape
    if weight.shape[:3] != (3, 3, c_in):
        raise ValueError(f"kernel shape {weight.shape} incompatible with input")
    c_out = weight.shape[3]
    h_out, w_out = _out_dim(h, stride), _out_dim(w_in, stride)
    padded = np.zeros((h + 2, w_in + 2, c_in))
    padded[1:-1, 1:-1] = data
    acc = np.zeros((h_out * w_out, c_out))
    for ky in range(3):
        for kx in range(3):
            window = padded[ky:ky + (h_out - 1) * stride + 1:stride,
                            kx:kx + (w_out - 1) * stride + 1:stride]
            acc += window.reshape(-1, c_in) @ weight[ky, kx]
    acc += bias
    return acc.reshape(h_out, w_out, c_out)


def deconv2x2(data: np.ndarray, weight: np.ndarray,
              bias: np.ndarray) -> np.ndarray:
    """Stride-2 transposed convolution with a 2x2 kernel: exact 2x upsample."""
    h, w_in, c_in = data.shape
    if weight.shape[:3] != (2, 2, c_in):
        raise ValueError(f"deconv kernel shape {weight.shape} incompatible with input")
    c_out = weight.shape[3]
    out = np.empty((2 * h, 2 * w_in, c_out))
    flat = data.reshape(-1, c_in)
    for dy in range(2):
        for dx in range(2):
            out[dy::2, dx::2] = (flat @ weight[dy, dx] + bias).reshape(h, w_in, c_out)
    return out


@dataclass(frozen=True)
class BackboneFeatures:
    """Backbone hierarchy: sparse C1-C4 plus the dense C5 map."""

    c1: SparsePillarVolume
    c2: SparsePillarVolume
    c3: SparsePillarVolume
    c4: SparsePillarVolume
    c5: DenseFeatureMap

    def volume_at(self, stride: int) -> SparsePillarVolume:
        for v in (self.c1, self.c2, self.c3, self.c4):
            if v.stride == stride:
                return v
        raise ValueError(f"no sparse volume at stride {stride}")


def _relu_volume(v: SparsePillarVolume) -> SparsePillarVolume:
    return SparsePillarVolume(v.stride, v.nx, v.ny, v.coords, relu(v.features))


def backbone_forward(v: SparsePillarVolume, weights: WeightStore,
                     channels: tuple[int, ...] = (16, 32, 64, 128, 256)) -> BackboneFeatures:
    """Run the five-stage hierarchy on a stride-1 pillar volume.

    Stage 1 is a single submanifold conv; stages 2-4 each apply a regular
    stride-2 conv then a submanifold conv; stage 5 densifies and applies
    two standard convolutions (the first stride-2). Every conv is followed
    by ReLU. Output strides are 1, 2, 4, 8, 16.
    """
    if len(channels) != 5:
        raise ValueError("channel plan must list five stages")
    if v.nx % 16 or v.ny % 16:
        raise ValueError(f"grid dims ({v.nx}, {v.ny}) must be divisible by 16")
    if v.channels != channels[0]:
        raise ValueError(
            f"input volume has {v.channels} channels, plan starts at {channels[0]}"
        )

    def conv(vol, name, stride=1, submanifold=False):
        out = sparse_conv2d(vol, weights.get(f"{name}.w"), weights.get(f"{name}.b"),
                            stride=stride, submanifold=submanifold)
        return _relu_volume(out)

    c1 = conv(v, "backbone.s1.subm", submanifold=True)
    stages = [c1]
    prev = c1
    for k in (2, 3, 4):
        down = conv(prev, f"backbone.s{k}.down", stride=2)
        prev = conv(down, f"backbone.s{k}.subm", submanifold=True)
        stages.append(prev)
    c2, c3, c4 = stages[1], stages[2], stages[3]

    dense_in = densify(c4)
    d = relu(dense_conv2d(dense_in.data, weights.get("backbone.s5.down.w"),
                          weights.get("backbone.s5.down.b"), stride=2))
    d = relu(dense_conv2d(d, weights.get("backbone.s5.conv.w"),
                          weights.get("backbone.s5.conv.b"), stride=1))
    c5 = DenseFeatureMap(c4.stride * 2, d)
    return BackboneFeatures(c1, c2, c3, c4, c5)
