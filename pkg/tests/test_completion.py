"""
Tests für die harmonische Lochfüllung und die Vervollständigung partieller Netze.
"""

import numpy as np
import pytest

from core.bvh import Bvh
from core.mesh_io import load_mesh
from core.raster import UvRasterizer
from core.template import Pose, load_template
from core.uv_map import UvMap
from management.config_manager import ConfigManager
from management.fixture_generator import sphere_template
from registration.completion_module import (CompletionConfig, complete_mesh, expand_parts, harmonic_inpaint,
                                            masked_uv_error, replacement_weight, texel_edges)
from registration.sns_module import SnsConfig, sns_register


def dense_harmonic(values, hole, coverage):
    """Referenzlösung über ein dichtes Gleichungssystem, Texel für Texel aufgebaut."""
    h, w = hole.shape
    unknown = [(i, j) for i in range(h) for j in range(w) if hole[i, j] and coverage[i, j]]
    index = {p: k for k, p in enumerate(unknown)}
    n = len(unknown)
    matrix = np.zeros((n, n))
    rhs = np.zeros((n, values.shape[2]))
    for k, (i, j) in enumerate(unknown):
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            a, b = i + di, j + dj
            if not (0 <= a < h and 0 <= b < w) or not coverage[a, b]:
                continue
            matrix[k, k] += 1.0
            if (a, b) in index:
                matrix[k, index[(a, b)]] -= 1.0
            else:
                rhs[k] += values[a, b]
    result = values.astype(np.float64).copy()
    if n:
        solution = np.linalg.solve(matrix, rhs)
        for k, (i, j) in enumerate(unknown):
            result[i, j] = solution[k]
    return result


def test_harmonic_fill_matches_dense_solve():
    rng = np.random.default_rng(11)
    for _ in range(20):
        h, w = rng.integers(4, 33, size=2)
        coverage = np.ones((h, w), dtype=bool)
        hole = rng.random((h, w)) < 0.6
        hole[0, 0] = False
        values = rng.random((h, w, 2)).astype(np.float32)
        result = harmonic_inpaint(UvMap(values, coverage), UvMap.from_mask(hole, coverage))
        expected = dense_harmonic(values, hole, coverage)
        assert not result.unreachable.any()
        np.testing.assert_allclose(result.field.data, expected, atol=1e-6)
        # Bekannte Texel bleiben bitgenau erhalten
        np.testing.assert_array_equal(result.field.data[~hole], values[~hole])
        assert result.residual < 1e-8


def test_harmonic_fill_of_constant_is_constant():
    coverage = np.ones((16, 16), dtype=bool)
    hole = np.zeros((16, 16), dtype=bool)
    hole[4:12, 3:10] = True
    result = harmonic_inpaint(UvMap(np.full((16, 16, 1), 0.2), coverage), UvMap.from_mask(hole, coverage))
    np.testing.assert_allclose(result.field.data, 0.2, atol=1e-7)


def test_isolated_hole_component_is_unreachable():
    coverage = np.ones((6, 6), dtype=bool)
    coverage[:, 2] = False
    hole = np.zeros((6, 6), dtype=bool)
    hole[:, 3:] = True
    values = np.ones((6, 6, 1))
    result = harmonic_inpaint(UvMap(values, coverage), UvMap.from_mask(hole, coverage))
    np.testing.assert_array_equal(result.unreachable, hole)
    assert np.all(result.field.data[hole] == 0.0)


def test_seam_links_connect_separate_regions():
    coverage = np.ones((6, 6), dtype=bool)
    coverage[:, 2] = False
    hole = np.zeros((6, 6), dtype=bool)
    hole[:, 3:] = True
    values = np.full((6, 6, 1), 0.5)
    links = np.array([[2 * 6 + 1, 2 * 6 + 3]])
    result = harmonic_inpaint(UvMap(values, coverage), UvMap.from_mask(hole, coverage), links=links)
    assert not result.unreachable.any()
    np.testing.assert_allclose(result.field.data[hole], 0.5, atol=1e-7)


def test_fill_without_known_texels_rejected():
    coverage = np.ones((3, 3), dtype=bool)
    with pytest.raises(ValueError):
        harmonic_inpaint(UvMap(np.zeros((3, 3, 1)), coverage), UvMap.from_mask(coverage, coverage))


def test_texel_edges_four_neighborhood():
    coverage = np.array([[True, True], [True, False]])
    assert texel_edges(coverage).tolist() == [[0, 1], [0, 2]]


def test_masked_uv_error_uniform_offset():
    coverage = np.ones((10, 10), dtype=bool)
    outer = np.zeros((10, 10), dtype=bool)
    outer[2:8, 2:8] = True
    inner = np.zeros((10, 10), dtype=bool)
    inner[4:6, 4:6] = True
    s_ref = UvMap(np.zeros((10, 10, 3)), coverage)
    s_p = UvMap(np.full((10, 10, 3), 0.1), coverage)
    error = masked_uv_error(s_p, s_ref, UvMap.from_mask(outer, coverage), UvMap.from_mask(inner, coverage))
    assert error == pytest.approx(0.03, abs=1e-9)


def test_masked_uv_error_requires_nested_masks():
    coverage = np.ones((4, 4), dtype=bool)
    s = UvMap(np.zeros((4, 4, 3)), coverage)
    full = UvMap.from_mask(coverage, coverage)
    empty = UvMap.from_mask(np.zeros((4, 4), dtype=bool), coverage)
    with pytest.raises(ValueError):
        masked_uv_error(s, s, empty, full)
    with pytest.raises(ValueError):
        masked_uv_error(s, s, full, full)


def test_hemisphere_completion_restores_sphere(hemisphere_mesh):
    tmpl = sphere_template(3)
    raster = UvRasterizer.for_template(tmpl, 256)
    sns_cfg = SnsConfig(range=0.5, min_component=10, uv_resolution=256)
    sns = sns_register(tmpl, Pose.identity(1), Bvh(hemisphere_mesh), sns_cfg, rasterizer=raster)
    assert not sns.valid_vertex.all()
    result = complete_mesh(sns, tmpl, Pose.identity(1), CompletionConfig(uv_resolution=256), rasterizer=raster)
    radius = np.linalg.norm(result.mesh.positions, axis=1)
    assert np.abs(radius - 1.2).max() < 2e-3
    assert not result.flagged_vertices.any()
    assert result.stats["unreachable_texels"] == 0
    np.testing.assert_array_equal(result.mesh.faces, tmpl.mesh.faces)
    # Gültige Vertices außerhalb des Lochs werden exakt übernommen
    assert result.stats["exact_vertices"] > 0


def test_hole_mask_size_mismatch(sphere_tmpl, sphere_bvh):
    sns = sns_register(sphere_tmpl, Pose.identity(1), sphere_bvh, SnsConfig(range=0.5, min_component=10,
                                                                             uv_resolution=64))
    with pytest.raises(ValueError):
        complete_mesh(sns, sphere_tmpl, Pose.identity(1), CompletionConfig(uv_resolution=128))


def test_replacement_weight_ramp(capsule_tmpl):
    raster = UvRasterizer.for_template(capsule_tmpl, 128)
    hard = replacement_weight(capsule_tmpl, raster, ["face"], 0)
    soft = replacement_weight(capsule_tmpl, raster, ["face"], 4)
    assert hard.min() == 0.0 and soft.min() == 0.0
    np.testing.assert_array_equal(hard == 0.0, soft == 0.0)
    assert ((soft > 0.0) & (soft < 1.0)).any()
    assert replacement_weight(capsule_tmpl, raster, ["tail"], 4).min() == 1.0


def test_part_replacement_keeps_template_shape(capsule_scene):
    tmpl = load_template(capsule_scene["template"])
    pose = Pose.load(capsule_scene["pose"], tmpl.joint_count)
    raster = UvRasterizer.for_template(tmpl, 256)
    sns = sns_register(tmpl, pose, Bvh(load_mesh(capsule_scene["target"])),
                       SnsConfig(range=0.1, min_component=10, uv_resolution=256), rasterizer=raster)
    cfg = CompletionConfig(replace_parts=["face"], blend_band=2, uv_resolution=256)
    result = complete_mesh(sns, tmpl, pose, cfg, rasterizer=raster)
    offset = np.linalg.norm(result.mesh.positions - sns.posed_template, axis=1)
    face = tmpl.label_mask(["face"])
    # Nur Vertices, deren Nachbarn ebenfalls zum Gesicht gehören
    inner = face.copy()
    for a, b in ((0, 1), (1, 2), (2, 0)):
        inner[tmpl.mesh.faces[:, a][~face[tmpl.mesh.faces[:, b]]]] = False
    assert inner.any()
    assert offset[inner].max() < 5e-3
    body = ~tmpl.label_mask(["face", "left-foot", "right-foot"]) & sns.valid_vertex
    assert np.median(offset[body]) == pytest.approx(0.02, abs=2e-3)


def test_config_reads_part_list():
    config = ConfigManager.from_dict({'Completion': {'replace_parts': 'face, left-foot', 'dilate': 3}})
    cfg = CompletionConfig.from_config(config)
    assert cfg.replace_parts == ["face", "left-foot"]
    assert cfg.dilate == 3
    with pytest.raises(ValueError):
        CompletionConfig.from_config(None, {'tolerance': 0.0})


def test_part_groups_expand_to_labels():
    cfg = CompletionConfig.from_config(None, {'replace_parts': ["face", "hands", "feet", "left-hand"]})
    assert cfg.replace_parts == ["face", "left-hand", "right-hand", "left-foot", "right-foot"]
    assert expand_parts(["tail"]) == ["tail"]


def test_completion_rejects_other_pose(sphere_tmpl, sphere_bvh):
    cfg = SnsConfig(range=0.5, min_component=10, uv_resolution=64)
    raster = UvRasterizer.for_template(sphere_tmpl, 64)
    sns = sns_register(sphere_tmpl, Pose.identity(1), sphere_bvh, cfg, rasterizer=raster)
    shifted = Pose(np.eye(3)[None], np.array([0.0, 0.1, 0.0]))
    with pytest.raises(ValueError, match="Pose"):
        complete_mesh(sns, sphere_tmpl, shifted, CompletionConfig(uv_resolution=64), rasterizer=raster)
    result = complete_mesh(sns, sphere_tmpl, Pose.identity(1), CompletionConfig(uv_resolution=64), rasterizer=raster)
    assert result.mesh.vertex_count == sphere_tmpl.vertex_count
