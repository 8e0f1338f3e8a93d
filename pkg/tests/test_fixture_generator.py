"""
Tests für die analytischen Testszenen.
"""

import os

import numpy as np
import pytest

from core.camera import Camera
from core.mesh_io import load_mesh
from core.sdf import GridSdf
from core.template import Pose, load_template
from core.uv_map import load_image
from management.config_manager import ConfigManager
from management.fixture_generator import TARGET_RADIUS, generate_fixture


def test_spheres_scene_files(spheres_scene):
    for role in ("template", "target", "sdf", "pose", "camera", "image", "front_normal", "back_normal", "config"):
        assert os.path.isfile(spheres_scene[role]), role
    target = load_mesh(spheres_scene["target"])
    np.testing.assert_allclose(np.linalg.norm(target.positions, axis=1), TARGET_RADIUS, atol=1e-6)
    sdf = GridSdf.load(spheres_scene["sdf"])
    assert sdf.query([[0.0, 0.0, 0.0]])[0] == pytest.approx(-TARGET_RADIUS, abs=0.05)
    cam = Camera.load(spheres_scene["camera"])
    assert load_image(spheres_scene["image"]).shape[:2] == (cam.height, cam.width)


def test_scene_config_is_runnable(spheres_scene):
    config = ConfigManager(spheres_scene["config"])
    config.validate_required_settings()
    assert config.validate_config() == (True, [])
    assert os.path.isfile(config.resolve_path(config.get('Pipeline', 'template')))


def test_capsule_scene_pose(capsule_scene):
    tmpl = load_template(capsule_scene["template"])
    pose = Pose.load(capsule_scene["pose"], tmpl.joint_count)
    assert not np.allclose(pose.rotations, np.eye(3))
    assert load_mesh(capsule_scene["target"]).vertex_count == tmpl.vertex_count


def test_hemisphere_scene_has_no_field(tmp_path):
    files = generate_fixture("hemisphere", str(tmp_path), image_resolution=32)
    assert "sdf" not in files
    config = ConfigManager(files["config"])
    assert not config.getboolean('Pipeline', 'evaluate')


def test_unknown_scene_rejected(tmp_path):
    with pytest.raises(ValueError):
        generate_fixture("cube", str(tmp_path))
