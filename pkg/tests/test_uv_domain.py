"""
Tests für UV-Karten, die Rasterung des Atlas, die Verschiebungskodierung und die Maskenalgebra.
"""

import numpy as np
import pytest

from core.raster import UvRasterizer, sample_bilinear, scan_triangles
from core.uv_map import UvMap, load_mask_png, save_mask_png, texel_centers
from registration.uv_domain import (apply_displacement, combine_masks, compose_prediction, dilate_mask,
                                    encode_displacement, normal_map, position_map, resample_vertices_from_map,
                                    seam_links)


@pytest.fixture(scope="module")
def raster(sphere_tmpl):
    return UvRasterizer.for_template(sphere_tmpl, 128)


def test_texel_center_convention():
    uu, vv = texel_centers(2, 4)
    np.testing.assert_allclose(uu[0], [0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(vv[:, 0], [0.75, 0.25])


def test_uv_map_zeroes_uncovered_texels():
    coverage = np.array([[True, False], [False, True]])
    uv_map = UvMap(np.ones((2, 2, 3)), coverage)
    assert uv_map.data.dtype == np.float32
    assert uv_map.data[0, 1].tolist() == [0.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        uv_map.require_same_grid(UvMap.zeros(3, 2, 1))


def test_uv_map_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    uv_map = UvMap(rng.random((4, 5, 2)), rng.random((4, 5)) > 0.5)
    path = str(tmp_path / "map.uvm")
    uv_map.save(path)
    loaded = UvMap.load(path)
    np.testing.assert_array_equal(loaded.data, uv_map.data)
    np.testing.assert_array_equal(loaded.coverage, uv_map.coverage)


def test_mask_png_round_trip(tmp_path):
    mask = np.zeros((6, 7), dtype=bool)
    mask[2:4, 1:5] = True
    path = str(tmp_path / "mask.png")
    save_mask_png(mask, path)
    np.testing.assert_array_equal(load_mask_png(path), mask)


def test_scan_triangles_pixel_center_rule():
    # Dreieck über die Pixelzentren (0,0), (1,0), (0,1); Kantenpunkte zählen dazu
    tri = np.array([[[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]])
    face, bary, degenerate = scan_triangles(tri, 3, 3)
    assert not degenerate.any()
    expected = np.array([[0, 0, 0], [0, 0, -1], [0, -1, -1]])
    np.testing.assert_array_equal(face, expected)
    np.testing.assert_allclose(bary[1, 1], [0.0, 0.5, 0.5])


def test_scan_triangles_smallest_face_wins_without_depth():
    tri = np.array([[[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]] * 2)
    face, _, _ = scan_triangles(tri, 3, 3)
    assert set(np.unique(face)) == {-1, 0}


def test_scan_triangles_depth_test():
    tri = np.array([[[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]] * 2)
    depth = np.array([[2.0, 2.0, 2.0], [1.0, 1.0, 1.0]])
    face, _, _ = scan_triangles(tri, 3, 3, depth=depth)
    assert set(np.unique(face)) == {-1, 1}


def test_rasterized_uvs_match_texel_centers(sphere_tmpl, raster):
    uv_map = raster.rasterize(sphere_tmpl.uv_positions, per_uv=True)
    uu, vv = texel_centers(128, 128)
    cov = uv_map.coverage
    assert cov.sum() > 0
    np.testing.assert_allclose(uv_map.data[cov, 0], uu[cov], atol=1e-6)
    np.testing.assert_allclose(uv_map.data[cov, 1], vv[cov], atol=1e-6)


def test_position_map_lies_on_template(sphere_tmpl, raster):
    s = position_map(sphere_tmpl, sphere_tmpl.mesh.positions, rasterizer=raster)
    radius = np.linalg.norm(s.data[s.coverage], axis=1)
    # Punkte liegen auf den ebenen Dreiecken innerhalb der Einheitskugel
    assert radius.max() <= 1.0 + 1e-6
    assert radius.min() > 0.9


def test_attribute_size_mismatch(sphere_tmpl, raster):
    from registration.uv_domain import rasterize_attribute_map

    with pytest.raises(ValueError):
        rasterize_attribute_map(sphere_tmpl, np.zeros((3, 1)), rasterizer=raster)


def test_resample_recovers_vertex_positions(sphere_tmpl):
    raster = UvRasterizer.for_template(sphere_tmpl, 512)
    s = position_map(sphere_tmpl, sphere_tmpl.mesh.positions, rasterizer=raster)
    values, flagged = resample_vertices_from_map(s, sphere_tmpl, rasterizer=raster)
    assert values.shape == (sphere_tmpl.vertex_count, 3)
    ok = ~flagged
    assert ok.mean() > 0.9
    np.testing.assert_allclose(values[ok], sphere_tmpl.mesh.positions[ok], atol=0.03)


def test_resample_empty_map_rejected(sphere_tmpl):
    with pytest.raises(ValueError):
        resample_vertices_from_map(UvMap.zeros(8, 8, 3, np.zeros((8, 8), dtype=bool)), sphere_tmpl)


def test_sample_bilinear_falls_back_to_nearest_texel():
    coverage = np.zeros((4, 4), dtype=bool)
    coverage[0, 0] = True
    uv_map = UvMap(np.full((4, 4, 1), 7.0), coverage)
    values, flagged = sample_bilinear(uv_map, np.array([[0.9, 0.1]]))
    assert flagged.tolist() == [True]
    assert values[0, 0] == pytest.approx(7.0)


def test_displacement_encode_apply_identity(sphere_tmpl, raster):
    rng = np.random.default_rng(3)
    s = position_map(sphere_tmpl, sphere_tmpl.mesh.positions, rasterizer=raster)
    n = normal_map(sphere_tmpl, sphere_tmpl.mesh.positions, rasterizer=raster)
    d = UvMap(rng.uniform(-0.1, 0.1, size=(128, 128, 1)), s.coverage)
    moved, flagged = apply_displacement(s, n, d)
    assert not flagged.any()
    decoded, flagged = encode_displacement(moved, s, n)
    assert not flagged.any()
    np.testing.assert_allclose(decoded.data[s.coverage], d.data[s.coverage], atol=1e-5)


def test_zero_normal_is_flagged():
    coverage = np.ones((1, 2), dtype=bool)
    s = UvMap(np.zeros((1, 2, 3)), coverage)
    n = UvMap(np.array([[[0.0, 0.0, 0.0], [0.0, 0.0, 2.0]]]), coverage)
    sample = UvMap(np.array([[[0.0, 0.0, 1.0], [0.0, 0.0, 0.5]]]), coverage)
    d, flagged = encode_displacement(sample, s, n)
    assert flagged.tolist() == [[True, False]]
    assert d.data[0, :, 0].tolist() == [0.0, 0.5]


def test_compose_prediction_uses_mask():
    coverage = np.ones((1, 2), dtype=bool)
    base = UvMap(np.zeros((1, 2, 3)), coverage)
    normals = UvMap(np.tile([0.0, 0.0, 1.0], (1, 2, 1)), coverage)
    predicted = UvMap(np.full((1, 2, 1), 0.3), coverage)
    known = UvMap(np.full((1, 2, 1), 0.1), coverage)
    hole = UvMap.from_mask(np.array([[True, False]]), coverage)
    result = compose_prediction(base, normals, predicted, known, hole)
    np.testing.assert_allclose(result.data[0, :, 2], [0.3, 0.1], atol=1e-7)


@pytest.mark.parametrize("h_r, h_o, expected", [(0, 0, 0), (1, 0, 1), (0, 1, 1), (1, 1, 1)])
def test_combine_masks_truth_table(h_r, h_o, expected):
    a = UvMap(np.full((1, 1, 1), float(h_r)))
    b = UvMap(np.full((1, 1, 1), float(h_o)))
    assert combine_masks(a, b).data[0, 0, 0] == expected


def test_combine_masks_resolution_mismatch():
    with pytest.raises(ValueError):
        combine_masks(UvMap.zeros(2, 2, 1), UvMap.zeros(4, 4, 1))


def test_dilate_mask_stays_inside_coverage():
    coverage = np.ones((5, 5), dtype=bool)
    coverage[:, 4] = False
    seed = np.zeros((5, 5), dtype=bool)
    seed[2, 3] = True
    grown = dilate_mask(UvMap.from_mask(seed, coverage), 1).mask
    expected = np.zeros((5, 5), dtype=bool)
    expected[1:4, 2:4] = True
    np.testing.assert_array_equal(grown, expected)
    np.testing.assert_array_equal(dilate_mask(UvMap.from_mask(seed, coverage), 0).mask, seed)
    with pytest.raises(ValueError):
        dilate_mask(UvMap.from_mask(seed, coverage), -1)


def test_seam_links_connect_both_charts(sphere_tmpl, raster):
    links = seam_links(sphere_tmpl, rasterizer=raster)
    assert len(links) > 0
    assert np.all(links[:, 0] < links[:, 1])
    assert np.all(raster.coverage.reshape(-1)[links])
    # Nahtpaare verbinden die linke (Nord-) mit der rechten (Süd-) Karte
    columns = links % 128
    assert np.all((columns[:, 0] < 64) != (columns[:, 1] < 64))
