import json

import numpy as np
import pytest

from lanebev import data_io
from lanebev.cli import main
from lanebev.synth import SceneParams, canonical_rig, checkerboard, generate_scene, jittered_rig, render_ground_pattern


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestPipeline:
    def test_full_oracle_roundtrip(self, capsys):
        code, out, _ = run(capsys, "pipeline", "--seed", "7", "--n-lanes", "4")
        assert code == 0
        report = json.loads(out)
        assert report["f_score"] == 1.0
        assert report["n_gt"] == 4

    def test_report_file(self, capsys, tmp_path):
        path = tmp_path / "report.json"
        code, out, _ = run(capsys, "pipeline", "--seed", "3", "--n-lanes", "2", "--hill", "1.0", "--out", str(path))
        assert code == 0
        report = json.loads(path.read_text())
        assert report["f_score"] == 1.0

    def test_byte_identical_reruns(self, capsys, tmp_path):
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        run(capsys, "pipeline", "--seed", "11", "--n-lanes", "3", "--jitter-deg", "2", "--jitter-m", "0.2", "--out", str(p1))
        run(capsys, "pipeline", "--seed", "11", "--n-lanes", "3", "--jitter-deg", "2", "--jitter-m", "0.2", "--out", str(p2))
        assert p1.read_bytes() == p2.read_bytes()


class TestUsageErrors:
    def test_missing_required_flag_exits_2(self, capsys):
        code, _, err = run(capsys, "homography", "--src", "only.json")
        assert code == 2
        assert "usage" in err

    def test_unknown_subcommand_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_domain_error_exits_1_with_json_stderr(self, capsys, tmp_path):
        missing = tmp_path / "nope.json"
        code, _, err = run(capsys, "homography", "--src", str(missing), "--dst", str(missing))
        assert code == 1
        payload = json.loads(err.strip())
        assert "error" in payload and "message" in payload
        assert "\n" not in err.strip()


class TestSchemas:
    @pytest.mark.parametrize(
        "command",
        ["homography", "warp", "encode", "decode", "eval", "synth", "fit-vrm", "losscheck", "plot", "pipeline"],
    )
    def test_every_subcommand_prints_schema(self, capsys, command):
        code, out, _ = run(capsys, command, "--schema")
        assert code == 0
        schema = json.loads(out)
        assert "inputs" in schema and "outputs" in schema


class TestFileWorkflow:
    def test_synth_encode_decode_eval_chain(self, capsys, tmp_path):
        params = tmp_path / "params.json"
        params.write_text(json.dumps({"n_lanes": 3, "hill_amplitude": 1.0, "seed": 4}))
        scene = tmp_path / "scene.json"
        assert run(capsys, "synth", "--params", str(params), "--out", str(scene))[0] == 0

        enc = tmp_path / "enc"
        pred = tmp_path / "pred.bldt"
        code, _, _ = run(
            capsys, "encode", "--scene", str(scene), "--out-dir", str(enc),
            "--ideal-pred", str(pred), "--embed-dim", "8",
        )
        assert code == 0
        assert (enc / "confidence.bldt").exists()
        conf = data_io.read_tensor(enc / "confidence.bldt")
        assert conf.shape == (200, 40)
        assert conf.sum() == 600.0

        lanes = tmp_path / "lanes.json"
        assert run(capsys, "decode", "--pred", str(pred), "--out", str(lanes))[0] == 0
        decoded = json.loads(lanes.read_text())
        assert len(decoded["lanes"]) == 3
        assert "fit" in decoded["lanes"][0]

        gt = tmp_path / "gt.json"
        gt.write_text(json.dumps({"lanes": json.loads(scene.read_text())["lanes"]}))
        report = tmp_path / "report.json"
        code, _, _ = run(capsys, "eval", "--pred", str(lanes), "--gt", str(gt), "--report", str(report))
        assert code == 0
        assert json.loads(report.read_text())["f_score"] == 1.0

    def test_eval_directory_mode(self, capsys, tmp_path):
        scene = generate_scene(SceneParams(n_lanes=2, seed=9))
        pred_dir = tmp_path / "pred"
        gt_dir = tmp_path / "gt"
        pred_dir.mkdir()
        gt_dir.mkdir()
        for name in ("a.json", "b.json"):
            data_io.save_lanes(scene.lanes, gt_dir / name)
        data_io.save_lanes(scene.lanes, pred_dir / "a.json")  # b.json missing -> empty preds
        code, out, _ = run(capsys, "eval", "--pred", str(pred_dir), "--gt", str(gt_dir))
        assert code == 0
        report = json.loads(out)
        assert report["n_gt"] == 4 and report["tp"] == 2
        assert report["recall"] == 0.5

    def test_homography_and_warp(self, capsys, tmp_path):
        rng = np.random.default_rng(2)
        a, b = jittered_rig(rng, 2.0, 0.2), jittered_rig(rng, 2.0, 0.2)
        cam_a, cam_b = tmp_path / "a.json", tmp_path / "b.json"
        data_io.save_rig(a, cam_a)
        data_io.save_rig(b, cam_b)
        hpath = tmp_path / "h.json"
        code, _, _ = run(capsys, "homography", "--src", str(cam_a), "--dst", str(cam_b), "--out", str(hpath))
        assert code == 0
        h = data_io.load_homography(hpath)
        assert h.matrix.shape == (3, 3)

        img = render_ground_pattern(a, checkerboard(), out_size=(1024, 576))
        src = tmp_path / "in.pgm"
        out_img = tmp_path / "out.pgm"
        data_io.write_pnm(img, src)
        code, _, _ = run(capsys, "warp", "--image", str(src), "--h", str(hpath), "--out", str(out_img))
        assert code == 0
        assert data_io.read_pnm(out_img).shape == (576, 1024)

    def test_custom_anchor_points_file(self, capsys, tmp_path):
        cam = tmp_path / "cam.json"
        data_io.save_rig(canonical_rig(), cam)
        points = tmp_path / "pts.json"
        points.write_text(json.dumps([[5.0, -3.0], [5.0, 3.0], [60.0, -3.0], [60.0, 3.0]]))
        code, out, _ = run(capsys, "homography", "--src", str(cam), "--dst", str(cam), "--points", str(points))
        assert code == 0
        h = np.asarray(json.loads(out)["matrix"])
        assert np.abs(h - np.eye(3)).max() < 1e-9

    def test_fit_vrm_from_sample_dir(self, capsys, tmp_path, rng):
        m0 = rng.normal(size=(6, 12))
        samples = tmp_path / "samples"
        samples.mkdir()
        for k in range(4):  # 4 x 4 channels = 16 pairs >= 12
            x = rng.normal(size=(3, 4, 4)).astype(np.float32)
            y = (m0 @ x.reshape(-1, 4).astype(float)).reshape(2, 3, 4)
            data_io.write_tensor(x, samples / f"fv_{k:03d}.bldt")
            data_io.write_tensor(y, samples / f"bev_{k:03d}.bldt")
        out = tmp_path / "map.bldt"
        code, _, _ = run(capsys, "fit-vrm", "--samples", str(samples), "--ridge", "0", "--out", str(out))
        assert code == 0
        fitted = data_io.read_tensor(out).astype(float)
        assert np.abs(fitted - m0).max() < 1e-4  # float32 sample quantization limits this
        sidecar = json.loads((tmp_path / "map.json").read_text())
        assert sidecar == {"fv_shape": [3, 4], "bev_shape": [2, 3], "scale": 32}


class TestLosscheck:
    def test_gradient_suite_passes(self, capsys):
        code, out, _ = run(capsys, "losscheck", "--seed", "5", "--batches", "3")
        assert code == 0
        report = json.loads(out)
        assert report["passed"] is True
        assert all(v < 1e-5 for v in report["max_rel_error"].values())


class TestPlot:
    def test_one_polyline_per_lane(self, capsys, tmp_path):
        scene = generate_scene(SceneParams(n_lanes=4, seed=6))
        lanes = tmp_path / "lanes.json"
        data_io.save_lanes(scene.lanes, lanes)
        svg = tmp_path / "bev.svg"
        code, _, _ = run(capsys, "plot", "--lanes", str(lanes), "--out", str(svg))
        assert code == 0
        text = svg.read_text()
        assert text.count("<polyline") == 4
        assert text.startswith("<svg")

    def test_plot_is_deterministic(self, capsys, tmp_path):
        scene = generate_scene(SceneParams(n_lanes=2, seed=6))
        lanes = tmp_path / "lanes.json"
        data_io.save_lanes(scene.lanes, lanes)
        s1, s2 = tmp_path / "a.svg", tmp_path / "b.svg"
        run(capsys, "plot", "--lanes", str(lanes), "--out", str(s1))
        run(capsys, "plot", "--lanes", str(lanes), "--out", str(s2))
        assert s1.read_bytes() == s2.read_bytes()


class TestDataDirEnv:
    def test_relative_paths_resolve_against_env(self, capsys, tmp_path, monkeypatch):
        data_io.save_rig(canonical_rig(), tmp_path / "cam.json")
        monkeypatch.setenv("LANEBEV_DATA_DIR", str(tmp_path))
        monkeypatch.chdir(tmp_path.parent)
        code, out, _ = run(capsys, "homography", "--src", "cam.json", "--dst", "cam.json")
        assert code == 0
        assert np.abs(np.asarray(json.loads(out)["matrix"]) - np.eye(3)).max() < 1e-9
