import os

import numpy as np
import pytest

from pillardet import fileio
from pillardet.geometry import Box3D
from pillardet.grid import PointCloud
from pillardet.rpn import Detection
from pillardet.synth import SceneSpec, generate_scene
from pillardet.weights import WeightStore


class TestPointCloudFormat:
    def test_round_trip(self, tmp_path):
        cloud, _ = generate_scene(SceneSpec(seed=1))
        path = str(tmp_path / "scene.pbk")
        fileio.save_point_cloud(path, cloud)
        loaded = fileio.load_point_cloud(path)
        np.testing.assert_array_equal(loaded.data,
                                      cloud.data.astype("<f4").astype(np.float64))

    def test_written_bytes_are_deterministic(self, tmp_path):
        cloud, _ = generate_scene(SceneSpec(seed=2))
        a, b = str(tmp_path / "a.pbk"), str(tmp_path / "b.pbk")
        fileio.save_point_cloud(a, cloud)
        fileio.save_point_cloud(b, cloud)
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_empty_cloud(self, tmp_path):
        path = str(tmp_path / "empty.pbk")
        fileio.save_point_cloud(path, PointCloud.empty())
        assert len(fileio.load_point_cloud(path)) == 0

    def test_magic_mismatch(self, tmp_path):
        path = str(tmp_path / "bad.pbk")
        with open(path, "wb") as f:
            f.write(b"NOPE" + b"\x00" * 16)
        with pytest.raises(fileio.FormatError, match="magic"):
            fileio.load_point_cloud(path)

    def test_truncation_detected(self, tmp_path):
        cloud, _ = generate_scene(SceneSpec(seed=3))
        path = str(tmp_path / "trunc.pbk")
        fileio.save_point_cloud(path, cloud)
        blob = open(path, "rb").read()
        with open(path, "wb") as f:
            f.write(blob[:-7])
        with pytest.raises(fileio.FormatError):
            fileio.load_point_cloud(path)


class TestWeightFormat:
    def test_round_trip_exact_for_f32_values(self, tmp_path):
        rng = np.random.default_rng(4)
        store = WeightStore({
            "a.w": rng.normal(size=(3, 3, 2, 4)).astype(np.float32),
            "a.b": rng.normal(size=(4,)).astype(np.float32),
            "m.w": rng.normal(size=(8, 2)).astype(np.float32),
        })
        path = str(tmp_path / "w.pwt")
        fileio.save_weights(path, store)
        loaded = fileio.load_weights(path)
        assert loaded.names() == store.names()
        for name in store.names():
            np.testing.assert_array_equal(loaded.get(name), store.get(name))

    def test_magic_mismatch(self, tmp_path):
        path = str(tmp_path / "bad.pwt")
        with open(path, "wb") as f:
            f.write(b"XXXX\x00\x00\x00\x00")
        with pytest.raises(fileio.FormatError, match="magic"):
            fileio.load_weights(path)

    def test_trailing_garbage_detected(self, tmp_path):
        store = WeightStore({"a.b": np.zeros(3, dtype=np.float32)})
        path = str(tmp_path / "t.pwt")
        fileio.save_weights(path, store)
        with open(path, "ab") as f:
            f.write(b"\x00\x00")
        with pytest.raises(fileio.FormatError, match="trailing"):
            fileio.load_weights(path)


class TestTextFormats:
    def test_gt_round_trip(self, tmp_path):
        _, gt = generate_scene(SceneSpec(seed=5))
        path = str(tmp_path / "scene.gt.txt")
        fileio.save_gt(path, gt)
        loaded = fileio.load_gt(path)
        assert len(loaded) == len(gt)
        for a, b in zip(loaded, gt):
            assert a.class_id == b.class_id and a.num_points == b.num_points
            assert a.cx == pytest.approx(b.cx, abs=5e-7)
            assert a.yaw == pytest.approx(b.yaw, abs=5e-7)

    def test_detection_round_trip(self, tmp_path):
        dets = [Detection(Box3D(1.25, -3.5, 0.2, 4.0, 2.0, 1.5, 0.75,
                                class_id=1), 1, 0.875, 0.5, 0.75)]
        path = str(tmp_path / "d.det.txt")
        fileio.save_detections(path, dets)
        (loaded,) = fileio.load_detections(path)
        assert loaded.class_id == 1
        assert loaded.score == 0.875
        assert loaded.iou_score == 0.5
        assert loaded.rectified_score == 0.75

    def test_malformed_line_rejected(self, tmp_path):
        path = str(tmp_path / "bad.gt.txt")
        with open(path, "w") as f:
            f.write("0 1.0 2.0\n")
        with pytest.raises(fileio.FormatError, match="expected 9 fields"):
            fileio.load_gt(path)


class TestAtomicity:
    def test_no_temp_files_left_behind(self, tmp_path):
        fileio.atomic_write_text(str(tmp_path / "out.txt"), "hello\n")
        assert sorted(os.listdir(tmp_path)) == ["out.txt"]
        assert open(tmp_path / "out.txt").read() == "hello\n"
