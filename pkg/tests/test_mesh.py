"""
Tests für das Netz-Datenmodell, die Netzgeometrie und den Netz-Import/-Export.
"""

import numpy as np
import pytest

from core.mesh import (Mesh, connected_components, edge_lengths, face_areas, face_normals, merge_meshes,
                       min_interior_angles, referenced_vertices, remove_faces, triangle_quality, unique_edges,
                       vertex_adjacency, vertex_normals)
from core.mesh_io import load_mesh, load_obj, save_mesh, save_obj
from management.fixture_generator import icosahedron


def test_invalid_index_rejected():
    with pytest.raises(ValueError):
        Mesh(np.zeros((3, 3)), [[0, 1, 3]])


def test_duplicate_index_rejected():
    with pytest.raises(ValueError):
        Mesh(np.zeros((3, 3)), [[0, 1, 1]])


def test_face_normals_and_areas(unit_square):
    normals, degenerate = face_normals(unit_square)
    assert not degenerate.any()
    np.testing.assert_allclose(normals, [[0, 0, 1], [0, 0, 1]])
    np.testing.assert_allclose(face_areas(unit_square), [0.5, 0.5])


def test_degenerate_face_gets_zero_normal():
    mesh = Mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    normals, degenerate = face_normals(mesh)
    assert degenerate.tolist() == [True]
    np.testing.assert_array_equal(normals, np.zeros((1, 3)))
    quality, flagged = triangle_quality(mesh)
    assert quality[0] == 0.0 and flagged[0]
    assert min_interior_angles(mesh)[0] == 0.0


def test_vertex_normals_point_outward_on_icosahedron():
    positions, faces = icosahedron()
    normals, flagged = vertex_normals(Mesh(positions, faces))
    assert not flagged.any()
    unit = positions / np.linalg.norm(positions, axis=1, keepdims=True)
    np.testing.assert_allclose(normals, unit, atol=1e-12)


def test_isolated_vertex_is_flagged():
    mesh = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]], [[0, 1, 2]])
    _, flagged = vertex_normals(mesh)
    assert flagged.tolist() == [False, False, False, True]
    assert referenced_vertices(mesh).tolist() == [True, True, True, False]


def test_unique_edges_shared_diagonal(unit_square):
    edges, face_edges = unique_edges(unit_square.faces)
    assert edges.tolist() == [[0, 1], [0, 2], [0, 3], [1, 2], [2, 3]]
    # Die Diagonale 0-2 gehört zu beiden Dreiecken
    assert face_edges[0, 2] == face_edges[1, 0] == 1


def test_vertex_adjacency_is_symmetric(unit_square):
    adjacency = vertex_adjacency(unit_square).toarray()
    np.testing.assert_array_equal(adjacency, adjacency.T)
    assert adjacency.sum() == 2 * 5


def test_edge_lengths_order():
    mesh = Mesh([[0, 0, 0], [3, 0, 0], [3, 4, 0]], [[0, 1, 2]])
    np.testing.assert_allclose(edge_lengths(mesh), [[3.0, 4.0, 5.0]])


def test_connected_components_vertex_contact_only():
    # Zwei Dreiecke, die sich nur Vertex 0 teilen
    positions = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]]
    mesh = Mesh(positions, [[0, 1, 2], [0, 3, 4]])
    ids, counts = connected_components(mesh)
    assert ids.tolist() == [0, 1]
    assert counts.tolist() == [1, 1]


def test_connected_components_order_of_first_appearance(unit_square):
    far = Mesh(unit_square.positions + 10.0, unit_square.faces)
    merged = merge_meshes([Mesh(far.positions[:3], [[0, 1, 2]]), unit_square])
    ids, counts = connected_components(merged)
    assert ids.tolist() == [0, 1, 1]
    assert counts.tolist() == [1, 2]


def test_remove_faces_keeps_vertices(unit_square):
    reduced = remove_faces(unit_square, [1])
    assert reduced.vertex_count == 4
    assert reduced.faces.tolist() == [[0, 1, 2]]
    with pytest.raises(IndexError):
        remove_faces(unit_square, [2])


def test_triangle_quality_equilateral():
    h = np.sqrt(3.0) / 2.0
    mesh = Mesh([[0, 0, 0], [1, 0, 0], [0.5, h, 0]], [[0, 1, 2]])
    quality, _ = triangle_quality(mesh)
    assert quality[0] == pytest.approx(1.0, abs=1e-12)
    assert min_interior_angles(mesh)[0] == pytest.approx(60.0)


def test_bbox_of_empty_mesh():
    lo, hi = Mesh(np.zeros((0, 3)), np.zeros((0, 3))).bbox()
    np.testing.assert_array_equal(lo, np.zeros(3))
    np.testing.assert_array_equal(hi, np.zeros(3))


def test_obj_keeps_vertex_order_and_uvs(tmp_path, sphere_tmpl_coarse):
    mesh = sphere_tmpl_coarse.mesh
    path = str(tmp_path / "mesh.obj")
    save_obj(path, mesh, sphere_tmpl_coarse.uv_positions, sphere_tmpl_coarse.uv_faces)
    loaded, uvs, uv_faces = load_obj(path)
    np.testing.assert_allclose(loaded.positions, mesh.positions, atol=1e-11)
    np.testing.assert_array_equal(loaded.faces, mesh.faces)
    np.testing.assert_array_equal(uv_faces, sphere_tmpl_coarse.uv_faces)
    np.testing.assert_allclose(uvs, sphere_tmpl_coarse.uv_positions, atol=1e-11)


def test_obj_output_is_deterministic(tmp_path, unit_square):
    first, second = tmp_path / "a.obj", tmp_path / "b.obj"
    save_mesh(str(first), unit_square)
    save_mesh(str(second), unit_square)
    assert first.read_bytes() == second.read_bytes()


def test_ply_with_colors(tmp_path, unit_square):
    colors = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]])
    mesh = Mesh(unit_square.positions, unit_square.faces, colors)
    path = str(tmp_path / "mesh.ply")
    save_mesh(path, mesh)
    loaded = load_mesh(path)
    np.testing.assert_allclose(loaded.positions, mesh.positions)
    np.testing.assert_array_equal(loaded.faces, mesh.faces)
    np.testing.assert_allclose(loaded.colors, colors)


def test_unsupported_extension(tmp_path, unit_square):
    with pytest.raises(ValueError):
        save_mesh(str(tmp_path / "mesh.stl"), unit_square)
