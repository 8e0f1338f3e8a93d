"""
Tests für das semantische Template: Unterteilung, Downsampling, Skinning und Manifest.
"""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from core.mesh import Mesh, unique_edges
from core.template import (Pose, SemanticTemplate, downsample, lbs_pose, lbs_repose, lbs_unpose, load_template,
                           posed_joints, save_template, subdivide_midpoint)
from management.fixture_generator import CAPSULE_JOINTS, sphere_template


def single_joint_template(positions, faces):
    n = len(positions)
    return SemanticTemplate(Mesh(positions, faces), np.zeros((n, 2)), faces, np.ones((n, 1)), np.zeros((1, 3)),
                            [-1], Pose.identity(1), np.zeros(n, dtype=np.int64))


def test_subdivision_counts():
    base = sphere_template(0)
    assert (base.vertex_count, base.mesh.face_count) == (12, 20)
    once = subdivide_midpoint(base)
    assert (once.vertex_count, once.mesh.face_count) == (42, 80)
    twice = subdivide_midpoint(once)
    assert (twice.vertex_count, twice.mesh.face_count) == (162, 320)
    assert twice.subdivision_level == 2
    assert [c["vertices"] for c in twice.base_counts] == [12, 42, 162]


def test_new_vertices_follow_canonical_edge_order():
    base = sphere_template(0)
    once = subdivide_midpoint(base)
    edges, _ = unique_edges(base.mesh.faces)
    expected = 0.5 * (base.mesh.positions[edges[:, 0]] + base.mesh.positions[edges[:, 1]])
    np.testing.assert_allclose(once.mesh.positions[12:], expected)
    np.testing.assert_array_equal(once.mesh.positions[:12], base.mesh.positions)


def test_subdivision_weights_and_labels(capsule_tmpl):
    coarse = downsample(capsule_tmpl, 2)
    fine = subdivide_midpoint(coarse)
    edges, _ = unique_edges(coarse.mesh.faces)
    v = coarse.vertex_count
    np.testing.assert_allclose(fine.weights[v:], 0.5 * (coarse.weights[edges[:, 0]] + coarse.weights[edges[:, 1]]))
    np.testing.assert_array_equal(fine.part_labels[v:], coarse.part_labels[edges[:, 0]])
    np.testing.assert_allclose(fine.weights.sum(axis=1), 1.0)


def test_subdivision_keeps_uv_seams(sphere_tmpl):
    # Der Zwei-Karten-Atlas trennt die Halbkugeln; Nahtvertices haben zwei UV-Positionen
    assert len(sphere_tmpl.uv_positions) > sphere_tmpl.vertex_count
    assert np.all((sphere_tmpl.uv_positions >= 0.0) & (sphere_tmpl.uv_positions <= 1.0))


def test_non_manifold_edge_rejected():
    positions = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]], dtype=float)
    faces = np.array([[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    with pytest.raises(ValueError):
        subdivide_midpoint(single_joint_template(positions, faces))


def test_downsample_returns_stored_level(sphere_tmpl):
    base = sphere_template(0)
    coarse = downsample(sphere_tmpl, 0)
    assert coarse.subdivision_level == 0
    np.testing.assert_array_equal(coarse.mesh.faces, base.mesh.faces)
    # Die Kugel-Fixture projiziert nach jeder Stufe auf die Einheitskugel
    np.testing.assert_allclose(coarse.mesh.positions, base.mesh.positions)
    with pytest.raises(ValueError):
        downsample(sphere_tmpl, 3)


def test_downsample_then_subdivide_restores_connectivity(sphere_tmpl):
    coarse = downsample(sphere_tmpl, 1)
    refined = subdivide_midpoint(coarse)
    np.testing.assert_array_equal(refined.mesh.faces, sphere_tmpl.mesh.faces)
    np.testing.assert_array_equal(refined.uv_faces, sphere_tmpl.uv_faces)


def test_identity_pose_is_rest_pose(capsule_tmpl):
    posed = lbs_pose(capsule_tmpl, capsule_tmpl.mesh.positions, Pose.identity(4))
    np.testing.assert_allclose(posed, capsule_tmpl.mesh.positions, atol=1e-12)


def test_lbs_round_trip_random_poses(capsule_tmpl):
    rng = np.random.default_rng(0)
    rest = capsule_tmpl.mesh.positions
    for _ in range(100):
        pose = Pose.random(capsule_tmpl.joint_count, rng)
        unposed, flagged = lbs_unpose(capsule_tmpl, lbs_pose(capsule_tmpl, rest, pose), pose)
        assert not flagged.any()
        assert np.abs(unposed - rest).max() < 1e-6


def test_repose_between_poses(capsule_tmpl):
    rng = np.random.default_rng(5)
    rest = capsule_tmpl.mesh.positions
    a, b = Pose.random(4, rng), Pose.random(4, rng)
    moved, flagged = lbs_repose(capsule_tmpl, lbs_pose(capsule_tmpl, rest, a), a, b)
    assert not flagged.any()
    np.testing.assert_allclose(moved, lbs_pose(capsule_tmpl, rest, b), atol=1e-9)


def test_rigid_chain_moves_child_joints(capsule_tmpl):
    rotations = np.tile(np.eye(3), (4, 1, 1))
    rotations[1] = Rotation.from_euler('z', 90, degrees=True).as_matrix()
    joints = posed_joints(capsule_tmpl, Pose(rotations, np.zeros(3)))
    np.testing.assert_allclose(joints[1], CAPSULE_JOINTS[1])
    # Kopf hängt an der Brust und dreht sich um sie
    np.testing.assert_allclose(joints[2], [-0.25, 0.25, 0.0], atol=1e-12)


def test_pose_validation():
    with pytest.raises(ValueError):
        Pose([np.diag([1.0, 1.0, -1.0])], np.zeros(3))
    with pytest.raises(ValueError):
        Pose([2.0 * np.eye(3)], np.zeros(3))
    with pytest.raises(ValueError):
        Pose.from_dict({"axis_angle": [[0.0, 0.0, 0.1]]}, joint_count=2)


def test_pose_from_quaternions_and_axis_angle():
    quat = Rotation.from_euler('x', 30, degrees=True).as_quat()
    from_quat = Pose.from_dict({"quaternions": [quat], "translation": [0.0, 1.0, 0.0]})
    from_rotvec = Pose.from_dict({"axis_angle": [[np.radians(30.0), 0.0, 0.0]]})
    np.testing.assert_allclose(from_quat.rotations, from_rotvec.rotations, atol=1e-12)
    np.testing.assert_allclose(from_quat.translation, [0.0, 1.0, 0.0])


def test_unknown_label_rejected(capsule_tmpl):
    with pytest.raises(ValueError):
        capsule_tmpl.label_mask(["tail"])
    assert capsule_tmpl.label_mask(["face"]).any()


def test_manifest_round_trip(tmp_path, capsule_tmpl):
    path = str(tmp_path / "template.json")
    save_template(capsule_tmpl, path)
    loaded = load_template(path)
    assert loaded.subdivision_level == capsule_tmpl.subdivision_level
    assert loaded.base_counts == capsule_tmpl.base_counts
    np.testing.assert_allclose(loaded.mesh.positions, capsule_tmpl.mesh.positions, atol=1e-11)
    np.testing.assert_array_equal(loaded.mesh.faces, capsule_tmpl.mesh.faces)
    np.testing.assert_allclose(loaded.weights, capsule_tmpl.weights, atol=1e-6)
    np.testing.assert_array_equal(loaded.part_labels, capsule_tmpl.part_labels)
    np.testing.assert_array_equal(loaded.parents, capsule_tmpl.parents)
    for k in range(loaded.subdivision_level):
        np.testing.assert_array_equal(loaded.level_faces[k], capsule_tmpl.level_faces[k])
    assert loaded.label_names == capsule_tmpl.label_names


def test_load_rejects_foreign_manifest(tmp_path):
    path = tmp_path / "other.json"
    path.write_text('{"format": "something-else"}', encoding='utf-8')
    with pytest.raises(ValueError):
        load_template(str(path))
