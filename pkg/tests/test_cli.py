import json
import subprocess
import sys

import numpy as np
import pytest

from monopose import io
from monopose.cli import DEFAULTS, build_parser, main
from monopose.heatmap import stack_heatmaps, synthesize_gaussian
from monopose.placement import init_focal
from monopose.synth import SynthConfig


def _load(path):
    return json.loads(path.read_text())


@pytest.fixture
def scene_file(tmp_path):
    cfg = tmp_path / "synth.json"
    io.write_json(io.synth_config_to_json(SynthConfig(n_persons=(2, 3), noise_sigma_px=1.0)), cfg)
    out = tmp_path / "scene.json"
    assert main(["synth", "--config", str(cfg), "--seed", "7", "--out", str(out)]) == 0
    return out


def test_defaults_wired_to_constants():
    assert DEFAULTS["fov"] == 60.0
    assert DEFAULTS["threshold_mm"] == 150.0
    assert DEFAULTS["px_proximity"] == 40.0
    assert DEFAULTS["max_iters"] == 200


def test_parser_lists_all_subcommands():
    text = build_parser().format_help()
    for cmd in ("synth", "decode", "lift", "place", "eval", "render", "pipeline"):
        assert cmd in text


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "monopose.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "pipeline" in proc.stdout


def test_synth_scene_is_seeded(tmp_path, scene_file):
    doc = _load(scene_file)
    assert doc["kind"] == "scene" and 2 <= len(doc["persons"]) <= 3
    again = tmp_path / "again.json"
    cfg = tmp_path / "synth.json"
    main(["synth", "--config", str(cfg), "--seed", "7", "--out", str(again)])
    assert again.read_text() == scene_file.read_text()


def test_place_eval_render_chain(tmp_path, scene_file, capsys):
    placed = tmp_path / "placed.json"
    assert main(["place", "--scene", str(scene_file), "--trace", "--out", str(placed)]) == 0
    doc = _load(placed)
    assert doc["initial_focal_px"] == pytest.approx(init_focal(1000, 60))
    assert doc["final_residual_px"] <= doc["initial_residual_px"]
    assert len(doc["trace_px"]) >= 1

    report = tmp_path / "report.json"
    code = main(["eval", "--pred", str(scene_file), "--gt", str(scene_file), "--setting", "2",
                 "--mode", "detected", "--report", str(report)])
    assert code == 0
    assert "3DPCK (detected) = 100.00%" in capsys.readouterr().out
    rep = _load(report)
    assert rep["kind"] == "eval_report" and rep["setting"] == 2

    svg = tmp_path / "scene.svg"
    assert main(["render", "--placed", str(placed), "--out", str(svg)]) == 0
    assert svg.read_text().count('class="skeleton"') == len(doc["persons"])


def test_config_precedence(tmp_path, scene_file):
    conf = tmp_path / "opts.json"
    conf.write_text(json.dumps({"fov": 90.0}))
    out = tmp_path / "p.json"
    main(["--config", str(conf), "place", "--scene", str(scene_file), "--out", str(out)])
    assert _load(out)["initial_focal_px"] == pytest.approx(500.0)
    main(["--config", str(conf), "place", "--scene", str(scene_file), "--fov", "60",
          "--out", str(out)])
    assert _load(out)["initial_focal_px"] == pytest.approx(init_focal(1000, 60))
    main(["place", "--scene", str(scene_file), "--out", str(out)])
    assert _load(out)["initial_focal_px"] == pytest.approx(init_focal(1000, 60))


def test_strict_config_rejects_unknown_keys(tmp_path, scene_file):
    conf = tmp_path / "opts.json"
    conf.write_text(json.dumps({"fov": 90.0, "colour": "red"}))
    out = tmp_path / "p.json"
    args = ["--config", str(conf), "place", "--scene", str(scene_file), "--out", str(out)]
    assert main(args) == 0
    assert main(["--strict"] + args) == 2


def test_decode(tmp_path):
    grids = [synthesize_gaussian(c, 1.5, 24, 20) for c in ((5.2, 7.7), (12.0, 10.5))]
    hm = tmp_path / "hm.json"
    io.write_json(io.heatmap_to_json(stack_heatmaps(grids), scale=2.0, offset=(100.0, 0.0)), hm)
    out = tmp_path / "kp.json"
    assert main(["decode", "--heatmaps", str(hm), "--out", str(out)]) == 0
    joints = np.array(_load(out)["joints_px"])
    np.testing.assert_allclose(joints, [[110.4, 15.4], [124.0, 21.0]], atol=0.1)


def test_lift_train_and_infer(tmp_path, scene_file, capsys):
    data = tmp_path / "data.json"
    assert main(["synth", "dataset", "--count", "30", "--out", str(data)]) == 0
    model = tmp_path / "model.json"
    assert main(["lift", "train", "--data", str(data), "--out", str(model), "--epochs", "2",
                 "--hidden-width", "16"]) == 0
    assert "over 2 epochs" in capsys.readouterr().out
    assert _load(model)["config"]["hidden_width"] == 16
    lifted = tmp_path / "lifted.json"
    assert main(["lift", "infer", "--model", str(model), "--keypoints", str(scene_file),
                 "--out", str(lifted)]) == 0
    assert _load(lifted)["kind"] == "scene"
    kp = tmp_path / "kp.json"
    doc = {"format_version": 1, "kind": "keypoints_2d"}
    doc.update(_load(scene_file)["persons"][0]["keypoints_2d"])
    io.write_json(doc, kp)
    assert main(["lift", "infer", "--model", str(model), "--keypoints", str(kp),
                 "--out", str(lifted)]) == 0
    assert len(_load(lifted)["pose_3d_mm"]) == 17


def test_exit_code_schema(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"format_version": 7, "image_w_px": 1, "image_h_px": 1, "persons": []}')
    assert main(["place", "--scene", str(bad), "--out", str(tmp_path / "o.json")]) == 2
    bad.write_text("[1, 2")
    assert main(["place", "--scene", str(bad), "--out", str(tmp_path / "o.json")]) == 2


def test_exit_code_numerical(tmp_path):
    data = tmp_path / "data.json"
    main(["synth", "dataset", "--count", "8", "--out", str(data)])
    code = main(["lift", "train", "--data", str(data), "--out", str(tmp_path / "m.json"),
                 "--epochs", "2", "--hidden-width", "8", "--learning-rate", "1e200"])
    assert code == 3


def test_exit_code_degenerate(tmp_path):
    hm = tmp_path / "zero.json"
    io.write_json({"w": 3, "h": 3, "joints": [[0.0] * 9]}, hm)
    assert main(["decode", "--heatmaps", str(hm), "--out", str(tmp_path / "o.json")]) == 4


def test_missing_file_is_generic_failure(tmp_path):
    assert main(["place", "--scene", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "o.json")]) == 1


def test_pipeline_jobs_match_serial(tmp_path):
    scenes = []
    for seed in (1, 2):
        path = tmp_path / f"s{seed}.json"
        main(["synth", "--seed", str(seed), "--out", str(path)])
        scenes.append(str(path))
    assert main(["pipeline", *scenes, "--out-dir", str(tmp_path / "serial")]) == 0
    assert main(["pipeline", *scenes, "--out-dir", str(tmp_path / "par"), "--jobs", "2"]) == 0
    for name in ("s1.placed.json", "s2.placed.json", "s1.report.json", "s2.report.txt"):
        assert (tmp_path / "serial" / name).read_text() == (tmp_path / "par" / name).read_text()


def test_pipeline_reports_failures(tmp_path, capsys):
    good = tmp_path / "good.json"
    main(["synth", "--out", str(good)])
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert main(["pipeline", str(good), str(bad), "--out-dir", str(tmp_path / "o")]) == 2
    captured = capsys.readouterr()
    assert "bad.json" in captured.err and "good.placed.json" in captured.out
