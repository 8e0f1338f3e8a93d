"""
Tests für Glättung, Bildprojektion in den UV-Raum und das Anwenden von Verschiebungskarten.
"""

import numpy as np
import pytest

from core.camera import orthographic_view
from core.mesh import Mesh
from core.raster import UvRasterizer
from core.uv_map import UvMap
from registration.uv_domain import encode_displacement, normal_map, position_map
from refinement.refinement_module import (ImageStack, RefinementConfig, displacement_error, laplacian_smooth,
                                          normal_map_error, project_image_to_uv, refine_apply, refine_iterate)


def fan_mesh(center=(0.0, 0.0, 1.0), extra_vertex=False):
    positions = [center, [1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]]
    if extra_vertex:
        positions.append([5.0, 5.0, 5.0])
    faces = [[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]]
    return Mesh(np.asarray(positions, dtype=float), faces)


@pytest.fixture(scope="module")
def raster(sphere_tmpl):
    return UvRasterizer.for_template(sphere_tmpl, 256)


def test_smoothing_zero_iterations_is_identity():
    mesh = fan_mesh()
    smoothed, isolated = laplacian_smooth(mesh, 0.5, 0)
    np.testing.assert_array_equal(smoothed.positions, mesh.positions)
    assert not isolated.any()


def test_smoothing_moves_to_neighbor_mean():
    mesh = fan_mesh()
    fixed = np.array([False, True, True, True, True])
    smoothed, _ = laplacian_smooth(mesh, 1.0, 1, fixed=fixed)
    np.testing.assert_allclose(smoothed.positions[0], [0.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_array_equal(smoothed.positions[1:], mesh.positions[1:])

    half, _ = laplacian_smooth(mesh, 0.5, 1, fixed=fixed)
    np.testing.assert_allclose(half.positions[0], [0.0, 0.0, 0.5], atol=1e-12)


def test_smoothing_keeps_isolated_vertices():
    mesh = fan_mesh(extra_vertex=True)
    smoothed, isolated = laplacian_smooth(mesh, 0.5, 3)
    assert isolated.tolist() == [False, False, False, False, False, True]
    np.testing.assert_array_equal(smoothed.positions[5], [5.0, 5.0, 5.0])


def test_smoothing_keeps_flat_mesh_flat():
    mesh = fan_mesh(center=(0.3, -0.2, 0.0))
    smoothed, _ = laplacian_smooth(mesh, 0.7, 5)
    np.testing.assert_allclose(smoothed.positions[:, 2], 0.0, atol=1e-15)
    np.testing.assert_array_equal(smoothed.faces, mesh.faces)


@pytest.mark.parametrize("lam, iterations", [(0.0, 1), (1.5, 1), (0.5, -1)])
def test_smoothing_rejects_invalid_parameters(lam, iterations):
    with pytest.raises(ValueError):
        laplacian_smooth(fan_mesh(), lam, iterations)


def test_refine_apply_offsets_sphere(sphere_tmpl, raster):
    z = UvMap(np.full((256, 256, 1), 0.1), raster.coverage)
    cfg = RefinementConfig(smooth_iters=0, uv_resolution=256)
    refined = refine_apply(sphere_tmpl.mesh, sphere_tmpl, z, cfg, rasterizer=raster)
    np.testing.assert_array_equal(refined.faces, sphere_tmpl.mesh.faces)
    radius = np.linalg.norm(refined.positions, axis=1)
    assert np.median(radius) == pytest.approx(1.1, abs=5e-3)
    assert (np.abs(radius - 1.1) < 0.02).mean() > 0.9


def test_refine_iterate_accumulates_offsets(sphere_tmpl, raster):
    z = UvMap(np.full((256, 256, 1), 0.05), raster.coverage)
    cfg = RefinementConfig(smooth_iters=0, uv_resolution=256)
    refined = refine_iterate(sphere_tmpl.mesh, sphere_tmpl, [z, z], cfg, rasterizer=raster)
    radius = np.linalg.norm(refined.positions, axis=1)
    assert np.median(radius) == pytest.approx(1.1, abs=1e-2)
    assert refine_iterate(sphere_tmpl.mesh, sphere_tmpl, [], cfg, rasterizer=raster) is sphere_tmpl.mesh


def test_refine_apply_rejects_foreign_mesh(sphere_tmpl, raster):
    z = UvMap(np.zeros((256, 256, 1)), raster.coverage)
    with pytest.raises(ValueError):
        refine_apply(fan_mesh(), sphere_tmpl, z, RefinementConfig(), rasterizer=raster)


def test_displacement_error_vanishes_for_encoded_target(sphere_tmpl, raster):
    s_l = position_map(sphere_tmpl, sphere_tmpl.mesh.positions, rasterizer=raster)
    n_l = normal_map(sphere_tmpl, sphere_tmpl.mesh.positions, rasterizer=raster)
    s_c = position_map(sphere_tmpl, 1.05 * sphere_tmpl.mesh.positions, rasterizer=raster)
    z, _ = encode_displacement(s_c, s_l, n_l)
    assert displacement_error(z, s_c, s_l, n_l) == pytest.approx(0.0, abs=1e-12)
    shifted = z.with_data(z.data + 0.1)
    assert displacement_error(shifted, s_c, s_l, n_l) == pytest.approx(0.01, rel=1e-4)


def test_normal_map_error():
    n = UvMap(np.tile([0.0, 0.0, 1.0], (4, 4, 1)))
    assert normal_map_error(n, n) == 0.0
    assert normal_map_error(n, n.with_data(-n.data)) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        normal_map_error(n, UvMap.zeros(2, 2, 3))


def gradient_stack(size=20):
    columns = np.arange(size, dtype=float)
    ramp = np.tile(columns[None, :, None], (size, 1, 3))
    front = np.tile([0.0, 0.0, 1.0], (size, size, 1))
    return ImageStack(ramp, front, ramp.copy())


def test_project_image_to_uv():
    cam = orthographic_view([0.0, 0.0, 0.0], 2.0, 100.0, 20, 20)
    points = np.array([[[0.0, 0.0, 0.0], [0.05, 0.0, 0.0], [5.0, 0.0, 0.0], [0.0, 0.0, 5.0]]])
    features, out_of_frame = project_image_to_uv(gradient_stack(), UvMap(points), cam)
    assert features.channels == 10
    assert out_of_frame.tolist() == [[False, False, True, True]]
    data = features.data[0]
    # Pixel x = 10 bzw. 15 liegt zwischen den Spalten 9/10 bzw. 14/15
    np.testing.assert_allclose(data[0, 0:3], 9.5, atol=1e-6)
    np.testing.assert_allclose(data[1, 0:3], 14.5, atol=1e-6)
    np.testing.assert_allclose(data[:2, 3:6], [[0.0, 0.0, 1.0]] * 2, atol=1e-6)
    # Hintere Normale wird an x' = Breite − x abgetastet
    np.testing.assert_allclose(data[0, 6:9], 9.5, atol=1e-6)
    np.testing.assert_allclose(data[1, 6:9], 4.5, atol=1e-6)
    np.testing.assert_allclose(data[:2, 9], 2.0, atol=1e-6)
    np.testing.assert_array_equal(data[2:], 0.0)


def test_project_image_rejects_size_mismatch():
    cam = orthographic_view([0.0, 0.0, 0.0], 2.0, 100.0, 32, 20)
    with pytest.raises(ValueError):
        project_image_to_uv(gradient_stack(), UvMap(np.zeros((1, 1, 3))), cam)


def test_image_stack_requires_equal_sizes():
    with pytest.raises(ValueError):
        ImageStack(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), np.zeros((5, 4, 3)))


def test_image_stack_from_fixture(spheres_scene):
    stack = ImageStack.load(spheres_scene["image"], spheres_scene["front_normal"], spheres_scene["back_normal"])
    assert (stack.width, stack.height) == (128, 128)


def test_refinement_config_validation():
    cfg = RefinementConfig.from_config(None, {'smooth_lambda': 1.0, 'smooth_iters': 0})
    assert cfg.smooth_lambda == 1.0
    with pytest.raises(ValueError):
        RefinementConfig.from_config(None, {'smooth_lambda': 0.0})
    with pytest.raises(ValueError):
        RefinementConfig.from_config(None, {'smooth_iters': -2})
