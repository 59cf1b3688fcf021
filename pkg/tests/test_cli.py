import json
import os

import pytest

from conftest import SMALL_CONFIG_DICT
from pillardet import fileio
from pillardet.cli import main
from pillardet.grid import PointCloud


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL_CONFIG_DICT))
    return str(path)


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


class TestSynth:
    def test_zero_scenes_writes_nothing(self, tmp_path, config_path):
        out = tmp_path / "scenes"
        assert main(["synth", "--config", config_path, "--scenes", "0",
                     "--out", str(out)]) == 0
        assert os.listdir(out) == []

    def test_rerun_is_byte_identical(self, tmp_path, config_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert main(["synth", "--config", config_path, "--scenes", "2",
                         "--out", str(out)]) == 0
        for name in sorted(os.listdir(out_a)):
            assert read_bytes(out_a / name) == read_bytes(out_b / name)

    def test_seed_flag_changes_scenes(self, tmp_path, config_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["synth", "--config", config_path, "--scenes", "1", "--out", str(out_a)])
        main(["synth", "--config", config_path, "--seed", "99", "--scenes", "1",
              "--out", str(out_b)])
        assert (read_bytes(out_a / "scene_0000.pbk")
                != read_bytes(out_b / "scene_0000.pbk"))

    def test_invalid_config_field_named(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"pool_stride": 5}))
        code = main(["synth", "--config", str(bad), "--scenes", "1",
                     "--out", str(tmp_path / "x")])
        assert code == 1
        assert "pool_stride" in capsys.readouterr().err

    def test_unknown_config_key_named(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"pillar": 0.1}))
        assert main(["synth", "--config", str(bad), "--scenes", "1",
                     "--out", str(tmp_path / "x")]) == 1
        assert "pillar" in capsys.readouterr().err


class TestDetect:
    def test_empty_scene_gives_empty_detections(self, tmp_path, config_path):
        scene = tmp_path / "empty.pbk"
        fileio.save_point_cloud(str(scene), PointCloud.empty())
        out = tmp_path / "dets"
        assert main(["detect", "--config", config_path, "--out", str(out),
                     str(scene)]) == 0
        assert read_bytes(out / "empty.det.txt") == b""

    def test_corrupt_scene_is_io_error(self, tmp_path, config_path, capsys):
        scene = tmp_path / "bad.pbk"
        scene.write_bytes(b"JUNKJUNKJUNK")
        assert main(["detect", "--config", config_path,
                     "--out", str(tmp_path / "d"), str(scene)]) == 2
        assert "magic" in capsys.readouterr().err

    def test_shapes_logged(self, tmp_path, config_path, capsys):
        scene = tmp_path / "empty.pbk"
        fileio.save_point_cloud(str(scene), PointCloud.empty())
        main(["detect", "--config", config_path, "--out", str(tmp_path / "d"),
              str(scene)])
        out = capsys.readouterr().out
        # 25.6 m range at 0.1 m pillars: 256 cells -> C3 64, C4 32, C5 16
        assert "C3=64x64" in out and "C4=32x32" in out and "C5=16x16" in out
        assert "P3=64x64" in out and "pool=64x64" in out


class TestEval:
    def make_scene_pair(self, tmp_path, config_path):
        scenes = tmp_path / "scenes"
        main(["synth", "--config", config_path, "--scenes", "2",
              "--out", str(scenes)])
        dets = tmp_path / "dets"
        dets.mkdir()
        from pillardet.rpn import Detection
        for i in range(2):
            gt = fileio.load_gt(str(scenes / f"scene_{i:04d}.gt.txt"))
            fileio.save_detections(
                str(dets / f"scene_{i:04d}.det.txt"),
                [Detection(g, g.class_id, 1.0, 1.0) for g in gt])
        return scenes, dets

    def test_perfect_detections_score_one(self, tmp_path, config_path, capsys):
        scenes, dets = self.make_scene_pair(tmp_path, config_path)
        report_path = tmp_path / "report.json"
        assert main(["eval", "--config", config_path, "--dets", str(dets),
                     "--gt", str(scenes), "--out", str(report_path)]) == 0
        out = capsys.readouterr().out
        assert "vehicle" in out and "L2" in out
        report = json.loads(report_path.read_text())
        for level in ("L1", "L2"):
            for cls in ("vehicle", "pedestrian", "cyclist"):
                assert report[level][cls]["ap"] == 1.0
                assert report[level][cls]["aph"] == 1.0

    def test_scene_count_mismatch_rejected(self, tmp_path, config_path, capsys):
        scenes, dets = self.make_scene_pair(tmp_path, config_path)
        os.unlink(dets / "scene_0001.det.txt")
        assert main(["eval", "--config", config_path, "--dets", str(dets),
                     "--gt", str(scenes)]) == 1
        assert "mismatch" in capsys.readouterr().err


class TestVerify:
    def test_default_budgets_pass(self, config_path, capsys):
        assert main(["verify", "--config", config_path]) == 0
        out = capsys.readouterr().out
        for suite in ("geometry-mc-iou", "sparse-dense-conv", "nms-brute-force",
                      "bilinear-fd-grad", "aux-seg-labels"):
            assert suite in out and "max_err" in out
        assert "all suites passed" in out

    def test_corrupted_kernel_fails_sparse_dense(self, config_path, capsys):
        assert main(["verify", "--config", config_path, "--corrupt"]) == 1
        out = capsys.readouterr().out
        assert "sparse-dense-conv  FAIL" in out
