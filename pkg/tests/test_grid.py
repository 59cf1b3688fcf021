import numpy as np
import pytest

from conftest import make_volume
from pillardet.grid import (GridSpec, PointCloud, SparsePillarVolume,
                            backbone_forward, deconv2x2, dense_conv2d,
                            densify, pillarize, sparse_conv2d, sparsify)
from pillardet.oracles import dense_conv_reference
from pillardet.weights import WeightStore


def pfe_store(channels=4, identity=True, seed=0):
    if identity:
        return WeightStore({"pfe.linear.w": np.eye(4)[:, :channels],
                            "pfe.linear.b": np.zeros(channels)})
    return WeightStore.seeded({"pfe.linear.w": (4, channels),
                               "pfe.linear.b": (channels,)}, seed)


class TestGridSpec:
    def test_default_dims(self):
        spec = GridSpec()
        assert spec.nx == spec.ny == 1504

    def test_non_integer_span_rejected(self):
        with pytest.raises(ValueError):
            GridSpec(x_min=0.0, x_max=1.05, y_min=0.0, y_max=1.0,
                     pillar_size=0.1)

    def test_empty_range_rejected(self):
        with pytest.raises(ValueError):
            GridSpec(z_min=4.0, z_max=-2.0)


class TestPillarize:
    def test_single_point_cell_index(self):
        spec = GridSpec()
        v = pillarize(PointCloud(np.array([[0.05, 0.05, 0.0, 0.5]])),
                      spec, pfe_store())
        assert v.coords.tolist() == [[752, 752]]
        assert v.stride == 1 and v.nx == 1504

    def test_point_on_max_boundary_dropped(self):
        spec = GridSpec()
        v = pillarize(PointCloud(np.array([[75.2, 0.0, 0.0, 0.5]])),
                      spec, pfe_store())
        assert v.n_active == 0

    def test_z_out_of_range_dropped(self):
        spec = GridSpec()
        pts = np.array([[0.0, 0.0, 4.0, 0.5], [0.0, 0.0, -2.01, 0.5]])
        assert pillarize(PointCloud(pts), spec, pfe_store()).n_active == 0

    def test_max_pool_of_two_points_in_one_cell(self):
        spec = GridSpec(x_min=0, x_max=1, y_min=0, y_max=1, z_min=0, z_max=4,
                        pillar_size=1.0)
        pts = np.array([[0.2, 0.5, 1.0, 0.3],
                        [0.7, 0.5, 2.0, 0.1]])
        v = pillarize(PointCloud(pts), spec, pfe_store())
        # identity encoder + ReLU: features are relu([dx, dy, z, i]) per point
        enc = np.maximum(np.array([[0.2 - 0.5, 0.0, 1.0, 0.3],
                                   [0.7 - 0.5, 0.0, 2.0, 0.1]]), 0.0)
        np.testing.assert_allclose(v.features[0], enc.max(axis=0))

    def test_permutation_invariance(self):
        spec = GridSpec(x_min=-8, x_max=8, y_min=-8, y_max=8, pillar_size=0.1)
        rng = np.random.default_rng(2)
        pts = np.column_stack([rng.uniform(-8, 8, 400), rng.uniform(-8, 8, 400),
                               rng.uniform(-2, 4, 400), rng.random(400)])
        store = pfe_store(identity=False)
        v1 = pillarize(PointCloud(pts), spec, store)
        v2 = pillarize(PointCloud(pts[rng.permutation(400)]), spec, store)
        assert np.array_equal(v1.coords, v2.coords)
        np.testing.assert_array_equal(v1.features, v2.features)

    def test_empty_cloud(self):
        v = pillarize(PointCloud.empty(), GridSpec(), pfe_store())
        assert v.n_active == 0 and v.channels == 4


class TestSparseConv:
    def test_submanifold_rejects_stride_two(self):
        v = make_volume(np.random.default_rng(0), 8, 8, 3)
        w = np.zeros((3, 3, 3, 3))
        with pytest.raises(ValueError):
            sparse_conv2d(v, w, np.zeros(3), stride=2, submanifold=True)

    def test_submanifold_identity_kernel(self):
        v = SparsePillarVolume(1, 8, 8, np.array([[4, 4]]),
                               np.array([[1.0, -2.0, 3.0]]))
        w = np.zeros((3, 3, 3, 3))
        w[1, 1] = np.eye(3)
        out = sparse_conv2d(v, w, np.zeros(3), submanifold=True)
        assert np.array_equal(out.coords, v.coords)
        np.testing.assert_array_equal(out.features, v.features)

    def test_submanifold_preserves_active_set(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            v = make_volume(rng, 12, 12, 4)
            out = sparse_conv2d(v, rng.normal(size=(3, 3, 4, 5)),
                                rng.normal(size=5), submanifold=True)
            assert np.array_equal(out.coords, v.coords)

    def test_stride_two_active_set_from_dense_oracle(self):
        # single even-coordinate site reaches exactly one output cell,
        # an odd-coordinate site reaches four; the oracle decides
        w = np.random.default_rng(2).normal(size=(3, 3, 2, 2))
        for site in ((4, 4), (3, 3), (5, 2)):
            v = SparsePillarVolume(1, 16, 16, np.array([site]), np.ones((1, 2)))
            out = sparse_conv2d(v, w, np.zeros(2), stride=2)
            ref = dense_conv_reference(densify(v).data, w, stride=2)
            expected = {(int(ix), int(iy)) for iy, ix in
                        np.argwhere(np.any(ref != 0.0, axis=-1))}
            assert {tuple(c) for c in out.coords.tolist()} == expected

    @pytest.mark.parametrize("stride,submanifold", [(1, True), (1, False), (2, False)])
    def test_matches_dense_reference(self, stride, submanifold):
        rng = np.random.default_rng(3)
        for _ in range(25):
            c_in, c_out = int(rng.integers(2, 6)), int(rng.integers(2, 6))
            v = make_volume(rng, 14, 14, c_in)
            w = rng.normal(size=(3, 3, c_in, c_out))
            out = sparse_conv2d(v, w, np.zeros(c_out), stride=stride,
                                submanifold=submanifold)
            ref = dense_conv_reference(densify(v).data, w, stride=stride)
            if submanifold:
                mask = np.zeros(ref.shape[:2], dtype=bool)
                mask[v.coords[:, 1], v.coords[:, 0]] = True
                ref = ref * mask[:, :, None]
            assert np.abs(densify(out).data - ref).max() < 1e-5

    def test_bias_applies_at_active_sites_only(self):
        rng = np.random.default_rng(4)
        v = make_volume(rng, 10, 10, 3)
        w = rng.normal(size=(3, 3, 3, 4))
        bias = rng.normal(size=4)
        out = sparse_conv2d(v, w, bias, stride=1)
        ref = dense_conv_reference(densify(v).data, w, stride=1)
        got = densify(out).data
        for ix, iy in out.coords:
            np.testing.assert_allclose(got[iy, ix], ref[iy, ix] + bias,
                                       atol=1e-10)
        active = np.zeros(got.shape[:2], dtype=bool)
        active[out.coords[:, 1], out.coords[:, 0]] = True
        assert np.all(got[~active] == 0.0)

    def test_empty_volume(self):
        v = SparsePillarVolume.empty(1, 8, 8, 3)
        out = sparse_conv2d(v, np.zeros((3, 3, 3, 2)), np.ones(2), stride=2)
        assert out.n_active == 0 and out.nx == 4


class TestDensify:
    def test_empty_volume_gives_zero_map(self):
        m = densify(SparsePillarVolume.empty(2, 8, 6, 3))
        assert m.data.shape == (6, 8, 3) and not m.data.any()

    def test_single_site(self):
        v = SparsePillarVolume(1, 8, 8, np.array([[2, 5]]), np.array([[7.0, -1.0]]))
        m = densify(v)
        assert m.data[5, 2].tolist() == [7.0, -1.0]
        assert np.count_nonzero(m.data) == 2

    def test_round_trip_with_nonzero_features(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            v = make_volume(rng, 10, 10, 3)
            # push features away from zero so no site vanishes
            feats = np.where(v.features >= 0, v.features + 0.5, v.features - 0.5)
            v = SparsePillarVolume(1, 10, 10, v.coords, feats)
            rt = sparsify(densify(v))
            assert np.array_equal(rt.coords, v.coords)
            np.testing.assert_array_equal(rt.features, v.features)


class TestDenseOps:
    def test_dense_conv_matches_reference(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(11, 9, 4))
        w = rng.normal(size=(3, 3, 4, 5))
        b = rng.normal(size=5)
        for stride in (1, 2):
            fast = dense_conv2d(x, w, b, stride=stride)
            np.testing.assert_allclose(
                fast, dense_conv_reference(x, w, stride=stride) + b, atol=1e-10)

    def test_deconv_doubles_dims(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(5, 7, 3))
        out = deconv2x2(x, rng.normal(size=(2, 2, 3, 4)), rng.normal(size=4))
        assert out.shape == (10, 14, 4)

    def test_deconv_scatter_semantics(self):
        x = np.zeros((2, 2, 1))
        x[0, 0, 0] = 1.0
        w = np.arange(4.0).reshape(2, 2, 1, 1)
        out = deconv2x2(x, w, np.zeros(1))
        np.testing.assert_array_equal(out[:2, :2, 0], [[0, 1], [2, 3]])
        assert not out[2:, 2:].any()


def backbone_store(plan, seed=0):
    layout = {"pfe.linear.w": (4, plan[0]), "pfe.linear.b": (plan[0],),
              "backbone.s1.subm.w": (3, 3, plan[0], plan[0]),
              "backbone.s1.subm.b": (plan[0],)}
    for k in (2, 3, 4):
        layout[f"backbone.s{k}.down.w"] = (3, 3, plan[k - 2], plan[k - 1])
        layout[f"backbone.s{k}.down.b"] = (plan[k - 1],)
        layout[f"backbone.s{k}.subm.w"] = (3, 3, plan[k - 1], plan[k - 1])
        layout[f"backbone.s{k}.subm.b"] = (plan[k - 1],)
    layout["backbone.s5.down.w"] = (3, 3, plan[3], plan[4])
    layout["backbone.s5.down.b"] = (plan[4],)
    layout["backbone.s5.conv.w"] = (3, 3, plan[4], plan[4])
    layout["backbone.s5.conv.b"] = (plan[4],)
    return WeightStore.seeded(layout, seed)


class TestBackbone:
    plan = (4, 8, 8, 16, 16)

    def grid(self):
        return GridSpec(x_min=-3.2, x_max=3.2, y_min=-3.2, y_max=3.2,
                        pillar_size=0.1)

    def test_strides_multiply(self):
        spec = self.grid()
        store = backbone_store(self.plan)
        rng = np.random.default_rng(8)
        pts = np.column_stack([rng.uniform(-3, 3, 200), rng.uniform(-3, 3, 200),
                               rng.uniform(-1, 2, 200), rng.random(200)])
        feats = backbone_forward(pillarize(PointCloud(pts), spec, store),
                                 store, self.plan)
        assert [feats.c1.stride, feats.c2.stride, feats.c3.stride,
                feats.c4.stride, feats.c5.stride] == [1, 2, 4, 8, 16]
        assert (feats.c3.nx, feats.c4.nx) == (16, 8)
        assert feats.c5.data.shape == (4, 4, self.plan[4])

    def test_channel_plan_echo(self):
        plan = (4, 8, 8, 16, 24)
        store = backbone_store(plan, seed=3)
        spec = self.grid()
        rng = np.random.default_rng(9)
        pts = np.column_stack([rng.uniform(-3, 3, 50), rng.uniform(-3, 3, 50),
                               rng.uniform(0, 2, 50), rng.random(50)])
        feats = backbone_forward(pillarize(PointCloud(pts), spec, store),
                                 store, plan)
        assert feats.c5.channels == 24

    def test_empty_cloud_does_not_crash(self):
        store = backbone_store(self.plan)
        feats = backbone_forward(
            pillarize(PointCloud.empty(), self.grid(), store), store, self.plan)
        assert feats.c1.n_active == feats.c4.n_active == 0
        # bias propagation through the dense stage leaves C5 non-zero
        assert np.abs(feats.c5.data).max() > 0

    def test_indivisible_grid_rejected(self):
        spec = GridSpec(x_min=0, x_max=2.4, y_min=0, y_max=2.4, pillar_size=0.1)
        store = backbone_store(self.plan)
        v = pillarize(PointCloud(np.array([[1.0, 1.0, 0.0, 0.5]])), spec, store)
        with pytest.raises(ValueError):
            backbone_forward(v, store, self.plan)

    def test_missing_weight_reported_by_name(self):
        store = backbone_store(self.plan)
        v = pillarize(PointCloud(np.array([[1.0, 1.0, 0.0, 0.5]])),
                      self.grid(), store)
        bad = WeightStore({n: store.get(n) for n in store.names()
                           if n != "backbone.s3.down.w"})
        with pytest.raises(KeyError, match="backbone.s3.down.w"):
            backbone_forward(v, bad, self.plan)
