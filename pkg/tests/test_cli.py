"""
Tests für die Kommandozeile: Unterbefehle, JSON-Ausgabe und Exit-Codes.
"""

import json
import logging
import os

import numpy as np
import pytest

from core.mesh import Mesh
from core.mesh_io import load_mesh, load_obj, save_mesh
from core.raster import UvRasterizer
from core.template import load_template
from core.uv_map import UvMap, load_image, load_mask_png
from main import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from management.fixture_generator import generate_fixture
from registration.uv_domain import position_map


@pytest.fixture(autouse=True)
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    return generate_fixture("spheres", str(tmp_path_factory.mktemp("cli")), image_resolution=64)


def error_line(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_gen_fixture(tmp_path, capsys):
    out = str(tmp_path / "scene")
    assert main(["gen-fixture", "hemisphere", "--out", out, "--image-resolution", "32"]) == EXIT_OK
    files = json.loads(capsys.readouterr().out)
    assert os.path.isfile(files["template"])
    assert files["config"] == os.path.join(out, "pipeline.ini")


def test_eval_of_identical_meshes(scene, capsys):
    assert main(["eval", "--pred", scene["target"], "--gt", scene["target"], "--resolution", "32"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["p2s_cm"] == pytest.approx(0.0, abs=1e-8)


def test_register_and_complete(scene, tmp_path, capsys):
    partial = str(tmp_path / "partial.obj")
    holes = str(tmp_path / "holes.png")
    args = ["register", "--template", scene["template"], "--target", scene["target"], "--range", "0.5",
            "--min-component", "10", "--uv-resolution", "128", "--out", partial, "--holemask", holes]
    assert main(args) == EXIT_OK
    stats = json.loads(capsys.readouterr().out)
    assert stats["valid_vertices"] == stats["vertices"]

    complete = str(tmp_path / "complete.obj")
    args = ["complete", "--template", scene["template"], "--partial", partial, "--holemask", holes,
            "--uv-resolution", "128", "--out", complete]
    assert main(args) == EXIT_OK
    assert os.path.isfile(complete)


def test_register_on_distance_field(scene, tmp_path, capsys):
    args = ["--threads", "2", "register", "--template", scene["template"], "--target", scene["sdf"],
            "--range", "0.5", "--min-component", "10", "--uv-resolution", "64",
            "--out", str(tmp_path / "partial.obj"), "--holemask", str(tmp_path / "holes.png")]
    assert main(args) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["valid_vertices"] > 0


def test_run_pipeline(scene, capsys):
    assert main(["run", scene["config"]]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["stages"][:3] == ["load", "register", "complete"]
    assert os.path.isfile(os.path.join(result["output_dir"], "manifest.json"))


def test_missing_pipeline_config_is_usage_error(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.ini")]) == EXIT_USAGE
    payload = error_line(capsys)
    assert payload["error"] == "UsageError"
    assert payload["stage"] is None


def test_pipeline_config_without_target(tmp_path, capsys):
    path = tmp_path / "pipeline.ini"
    path.write_text("[Pipeline]\ntemplate = template.json\noutput_dir = out\n", encoding='utf-8')
    assert main(["run", str(path)]) == EXIT_USAGE
    assert "Pipeline.target" in error_line(capsys)["message"]


def test_invalid_thread_count(scene, capsys):
    assert main(["--threads", "0", "eval", "--pred", scene["target"], "--gt", scene["target"]]) == EXIT_USAGE
    assert error_line(capsys)["error"] == "UsageError"


def test_runtime_failure_reports_command(tmp_path, capsys):
    missing = str(tmp_path / "missing.obj")
    assert main(["eval", "--pred", missing, "--gt", missing]) == EXIT_FAILURE
    assert error_line(capsys)["stage"] == "eval"


def test_unknown_command_exits_with_usage():
    with pytest.raises(SystemExit) as info:
        main(["explode"])
    assert info.value.code == EXIT_USAGE


@pytest.fixture(scope="module")
def registered(scene, tmp_path_factory):
    """register und complete mit den dokumentierten Flags; liefert die erzeugten Dateien."""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    work = tmp_path_factory.mktemp("chain")
    files = {"partial": str(work / "partial.obj"), "holemask": str(work / "holes.png"),
             "complete": str(work / "complete.obj")}
    assert main(["-c", scene["config"], "register", "--template", scene["template"], "--target", scene["target"],
                 "--pose", scene["pose"], "--out", files["partial"], "--holemask", files["holemask"],
                 "--theta", "2.0", "--area-ratio", "3", "--edge-ratio", "3", "--min-component", "10",
                 "--range", "0.5", "--sdf-step", "0.01"]) == EXIT_OK
    assert main(["-c", scene["config"], "complete", "--template", scene["template"], "--partial", files["partial"],
                 "--holemask", files["holemask"], "--pose", scene["pose"], "--out", files["complete"],
                 "--dilate", "1", "--tol", "1e-8", "--replace", "face,hands,feet"]) == EXIT_OK
    root.handlers[:] = handlers
    root.setLevel(level)
    return files


def test_documented_register_and_complete_flags(registered):
    assert load_mask_png(registered["holemask"]).shape == (256, 256)
    complete, uv_positions, _ = load_obj(registered["complete"])
    assert uv_positions is not None
    assert np.isfinite(complete.positions).all()


def test_register_accepts_documented_thresholds(scene, tmp_path, capsys):
    args = ["-c", scene["config"], "register", "--template", scene["template"], "--target", scene["sdf"],
            "--pose", scene["pose"], "--out", str(tmp_path / "partial.obj"),
            "--holemask", str(tmp_path / "holes.png"), "--theta", "0.5", "--sdf-step", "0.02"]
    assert main(args) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["valid_vertices"] > 0


def test_refine_apply_with_zero_displacement(scene, registered, tmp_path, capsys):
    tmpl = load_template(scene["template"])
    coverage = UvRasterizer.for_template(tmpl, 64).coverage
    z = str(tmp_path / "z.uvm")
    UvMap(np.zeros((64, 64, 1)), coverage).save(z)
    refined = str(tmp_path / "refined.obj")
    args = ["refine-apply", "--complete", registered["complete"], "--z", z, "--template", scene["template"],
            "--out", refined, "--smooth-lambda", "0.5", "--smooth-iters", "1"]
    assert main(args) == EXIT_OK
    assert "normal_map_error" in json.loads(capsys.readouterr().out)
    assert load_mesh(refined).vertex_count == tmpl.vertex_count


def test_project_features_from_position_map(scene, registered, tmp_path, capsys):
    tmpl = load_template(scene["template"])
    positions = str(tmp_path / "S.uvm")
    position_map(tmpl, load_mesh(registered["complete"]).positions, 64).save(positions)
    features = str(tmp_path / "F.uvm")
    args = ["project-features", "--image", scene["image"], "--front-normal", scene["front_normal"],
            "--back-normal", scene["back_normal"], "--camera", scene["camera"], "--positions", positions,
            "--out", features]
    assert main(args) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["texels"] > 0
    assert UvMap.load(features).shape == (64, 64)


def test_project_features_needs_positions_or_mesh(scene, tmp_path, capsys):
    args = ["project-features", "--image", scene["image"], "--front-normal", scene["front_normal"],
            "--back-normal", scene["back_normal"], "--camera", scene["camera"], "--out", str(tmp_path / "F.uvm")]
    assert main(args) == EXIT_USAGE
    assert error_line(capsys)["error"] == "UsageError"


def test_texture_writes_visibility_mask(scene, registered, tmp_path, capsys):
    texture, mask = str(tmp_path / "texture.png"), str(tmp_path / "visible.png")
    args = ["-c", scene["config"], "texture", "--mesh", registered["complete"], "--template", scene["template"],
            "--image", scene["image"], "--camera", scene["camera"], "--out", texture, "--mask", mask]
    assert main(args) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["visible_texels"] > 0
    assert load_mask_png(mask).shape == (256, 256)


def test_transfer_color_bakes_texture(scene, registered, tmp_path, capsys):
    target = load_mesh(scene["target"])
    colors = np.tile([[0.8, 0.2, 0.1]], (target.vertex_count, 1))
    scan = str(tmp_path / "scan.ply")
    save_mesh(scan, Mesh(target.positions, target.faces, colors))
    texture = str(tmp_path / "texture.png")
    args = ["-c", scene["config"], "transfer-color", "--mesh", registered["complete"], "--scan", scan,
            "--out", texture]
    assert main(args) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["icp_iterations"] >= 1
    rgb = load_image(texture)
    assert rgb.shape[:2] == (256, 256)
    assert rgb.reshape(-1, 3).max(axis=0) == pytest.approx([0.8, 0.2, 0.1], abs=1.0 / 255.0)


def test_transfer_color_without_uv_is_usage_error(scene, tmp_path, capsys):
    target = load_mesh(scene["target"])
    scan = str(tmp_path / "scan.ply")
    save_mesh(scan, Mesh(target.positions, target.faces, np.full((target.vertex_count, 3), 0.5)))
    args = ["transfer-color", "--mesh", scan, "--scan", scan, "--out", str(tmp_path / "texture.png")]
    assert main(args) == EXIT_USAGE


def test_eval_with_documented_flags(scene, capsys):
    args = ["eval", "--pred", scene["target"], "--gt", scene["target"], "--views", "front,back", "--res", "64"]
    assert main(args) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["p2s_cm"] == pytest.approx(0.0, abs=1e-8)


def test_substitute_with_documented_flags(scene, registered, tmp_path, capsys):
    out = str(tmp_path / "substituted.obj")
    args = ["substitute", "--mesh", registered["complete"], "--donor", registered["complete"],
            "--template", scene["template"], "--label", "body", "--out", out, "--band", "2", "--icp-iters", "5"]
    assert main(args) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["label"] == "body"
    assert load_mesh(out).vertex_count == load_mesh(registered["complete"]).vertex_count


def test_animate_with_pose(scene, tmp_path, capsys):
    out = str(tmp_path / "posed.obj")
    assert main(["animate", "--template", scene["template"], "--pose", scene["pose"], "--out", out]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["vertices"] == load_mesh(out).vertex_count
