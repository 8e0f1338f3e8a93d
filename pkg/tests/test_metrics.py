"""
Tests für P2S, Chamfer, Normalenbilder und die Dreiecksqualität.
"""

import numpy as np
import pytest

from analysis.metrics_module import (MetricsConfig, chamfer, default_views, evaluate, mesh_quality_stats,
                                     normal_image_error, p2s, render_normals)
from core.mesh import Mesh
from management.fixture_generator import icosahedron, sphere_template


@pytest.fixture(scope="module")
def unit_sphere():
    return sphere_template(3).mesh


def scaled(mesh, factor):
    return mesh.with_positions(mesh.positions * factor)


def test_p2s_of_identical_meshes_is_zero(unit_sphere):
    assert p2s(unit_sphere, unit_sphere) == pytest.approx(0.0, abs=1e-10)
    assert chamfer(unit_sphere, unit_sphere) == pytest.approx(0.0, abs=1e-10)


def test_concentric_spheres(unit_sphere):
    outer = scaled(unit_sphere, 1.02)
    # Vertices der äußeren Kugel liegen genau 2 cm über den inneren Vertices
    assert p2s(outer, unit_sphere) == pytest.approx(2.0, abs=1e-6)
    assert chamfer(outer, unit_sphere) == pytest.approx(2.0, abs=0.05)
    assert chamfer(scaled(unit_sphere, 1.01), unit_sphere) == pytest.approx(1.0, abs=0.05)


def test_empty_mesh_rejected(unit_sphere):
    empty = Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    with pytest.raises(ValueError):
        p2s(empty, unit_sphere)
    with pytest.raises(ValueError):
        p2s(unit_sphere, empty)


def test_icosahedron_quality():
    positions, faces = icosahedron()
    stats = mesh_quality_stats(Mesh(positions, faces))
    assert stats["g_avg"] == pytest.approx(1.0, abs=1e-12)
    assert stats["pct_angle_below_30"] == 0.0


def test_quality_counts_degenerate_faces():
    mesh = Mesh([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0], [2, 0, 0]], [[0, 1, 2], [0, 1, 3]])
    stats = mesh_quality_stats(mesh)
    assert stats["g_avg"] == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        mesh_quality_stats(Mesh(mesh.positions, [[0, 1, 3]]))


def test_default_views_frame_the_meshes(unit_sphere):
    front, back = default_views([unit_sphere], resolution=64)
    for cam in (front, back):
        pixels, _, in_front = cam.project(unit_sphere.positions)
        assert in_front.all()
        assert cam.in_frame(pixels).all()
    np.testing.assert_allclose(front.view_direction, [0.0, 0.0, -1.0])
    np.testing.assert_allclose(back.view_direction, [0.0, 0.0, 1.0])


def test_render_normals_faces_camera(unit_sphere):
    front, _ = default_views([unit_sphere], resolution=64)
    image, coverage = render_normals(unit_sphere, front)
    assert coverage[32, 32]
    assert image[32, 32, 2] > 0.95
    assert not coverage[0, 0]


def test_normal_image_error(unit_sphere):
    views = default_views([unit_sphere], resolution=64)
    assert normal_image_error(unit_sphere, unit_sphere, views) == 0.0
    bumpy = unit_sphere.with_positions(unit_sphere.positions * np.array([1.0, 1.0, 1.3]))
    assert normal_image_error(bumpy, unit_sphere, views) > 0.0
    with pytest.raises(ValueError):
        normal_image_error(unit_sphere, unit_sphere, [])


def test_evaluate_report_keys(unit_sphere):
    report = evaluate(scaled(unit_sphere, 1.01), unit_sphere, resolution=64)
    assert set(report) == {"p2s_cm", "chamfer_cm", "normal_l2", "g_avg", "pct_angle_below_30", "wall_time_s"}
    assert report["p2s_cm"] == pytest.approx(1.0, abs=1e-6)


def test_metrics_config():
    cfg = MetricsConfig.from_config(None, {'views': ['front']})
    assert cfg.views == ("front",)
    with pytest.raises(ValueError):
        MetricsConfig.from_config(None, {'views': ['side']})
    with pytest.raises(ValueError):
        MetricsConfig.from_config(None, {'resolution': 0})
