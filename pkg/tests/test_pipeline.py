"""
Tests für den Pipeline-Runner: Stufenfolge, Reproduzierbarkeit und Fehlerbehandlung.
"""

import json
import os

import numpy as np
import pytest

from core.mesh_io import load_mesh
from core.raster import UvRasterizer
from core.template import load_template
from core.uv_map import UvMap
from management.config_manager import ConfigManager
from management.fixture_generator import generate_fixture
from management.pipeline_runner import PipelineRunner, PipelineStageError, run_pipeline


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    return generate_fixture("spheres", str(tmp_path_factory.mktemp("pipeline")), image_resolution=64)


def run_into(scene, output_dir, overrides=None):
    config = ConfigManager(scene["config"])
    config.set('Pipeline', 'output_dir', output_dir)
    return PipelineRunner(config, overrides).run()


def read_json(path):
    with open(path, encoding='utf-8') as f:
        return json.load(f)


def test_full_run_writes_artifacts(scene):
    result = run_into(scene, "run_full")
    assert result["stages"] == ["load", "register", "complete", "texture", "eval"]
    out = result["output_dir"]
    for name in ("partial.obj", "holes.png", "complete.obj", "displacement.uvm", "canonical.uvm",
                 "texture.png", "texture_mask.png", "report.json", "report.csv", "manifest.json", "timings.json"):
        assert os.path.isfile(os.path.join(out, name)), name

    tmpl = load_template(scene["template"])
    complete = load_mesh(os.path.join(out, "complete.obj"))
    assert complete.vertex_count == tmpl.vertex_count
    report = read_json(os.path.join(out, "report.json"))
    assert "wall_time_s" not in report
    assert report["p2s_cm"] < 0.1

    manifest = read_json(os.path.join(out, "manifest.json"))
    assert manifest["stages"] == result["stages"]
    assert "wall_time_s" not in manifest["stage_stats"]["register"]
    timings = read_json(os.path.join(out, "timings.json"))
    assert {"register", "complete", "total"} <= set(timings)


def test_reruns_are_identical(scene):
    first = read_json(os.path.join(run_into(scene, "run_a")["output_dir"], "manifest.json"))
    second = read_json(os.path.join(run_into(scene, "run_b")["output_dir"], "manifest.json"))
    threaded = read_json(os.path.join(run_into(scene, "run_c", {'workers': 8})["output_dir"], "manifest.json"))
    for other in (second, threaded):
        assert other["artifacts"] == first["artifacts"]
        assert other["stage_stats"] == first["stage_stats"]


def test_refinement_stage_runs_with_z_map(scene, tmp_path):
    tmpl = load_template(scene["template"])
    raster = UvRasterizer.for_template(tmpl, 128)
    z_path = str(tmp_path / "z.uvm")
    UvMap(np.full((128, 128, 1), 0.01), raster.coverage).save(z_path)
    config = ConfigManager(scene["config"])
    config.set('Pipeline', 'output_dir', str(tmp_path / "out"))
    config.set('Pipeline', 'z_map', z_path)
    config.set('Pipeline', 'evaluate', False)
    result = PipelineRunner(config).run()
    assert "refine" in result["stages"]
    assert "refined" in result["artifacts"]


def test_missing_target_names_setting(tmp_path):
    config = ConfigManager.from_dict({'Pipeline': {'template': 'template.json', 'output_dir': str(tmp_path)}})
    with pytest.raises(ValueError, match="Pipeline.target"):
        PipelineRunner(config)


def test_stage_failure_names_stage(scene, tmp_path):
    config = ConfigManager(scene["config"])
    config.set('Pipeline', 'target', 'does_not_exist.obj')
    config.set('Pipeline', 'output_dir', str(tmp_path / "out"))
    with pytest.raises(PipelineStageError) as info:
        PipelineRunner(config).run()
    assert info.value.stage == "load"


def test_invalid_config_rejected(scene, tmp_path):
    config = ConfigManager(scene["config"])
    config.set('Pipeline', 'uv_resolution', 300)
    with pytest.raises(ValueError):
        PipelineRunner(config)


@pytest.mark.slow
def test_capsule_pipeline(tmp_path):
    files = generate_fixture("capsule", str(tmp_path), image_resolution=128)
    result = run_pipeline(files["config"])
    assert result["report"]["p2s_cm"] < 1.0
    assert result["report"]["g_avg"] > 0.5
