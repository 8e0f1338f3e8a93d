"""
Tests für Procrustes und die ICP-Ausrichtung.
"""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from core.bvh import Bvh
from core.mesh import Mesh, face_normals
from management.fixture_generator import sphere_template
from texturing.icp_module import (IcpConfig, SimilarityTransform, check_non_collinear, icp_align,
                                  point_to_plane_step, procrustes)


@pytest.fixture(scope="module")
def ellipsoid():
    mesh = sphere_template(3).mesh
    return Mesh(mesh.positions * np.array([1.0, 0.6, 0.3]), mesh.faces)


@pytest.fixture(scope="module")
def ellipsoid_bvh(ellipsoid):
    return Bvh(ellipsoid)


def rotation_angle(a, b):
    return Rotation.from_matrix(a.T @ b).magnitude()


def test_procrustes_recovers_similarity():
    rng = np.random.default_rng(2)
    source = rng.normal(size=(40, 3))
    for _ in range(50):
        rotation = Rotation.random(random_state=rng).as_matrix()
        translation = rng.normal(size=3)
        scale = rng.uniform(0.5, 2.0)
        target = scale * source @ rotation.T + translation
        rigid = procrustes(source, scale * source @ rotation.T, with_scale=False)
        assert rotation_angle(rigid.rotation, rotation) < 1e-9
        fitted = procrustes(source, target, with_scale=True)
        assert rotation_angle(fitted.rotation, rotation) < 1e-9
        np.testing.assert_allclose(fitted.translation, translation, atol=1e-9)
        assert fitted.scale == pytest.approx(scale, rel=1e-9)


def test_procrustes_never_reflects():
    rng = np.random.default_rng(4)
    source = rng.normal(size=(20, 3))
    mirrored = source * np.array([1.0, 1.0, -1.0])
    result = procrustes(source, mirrored)
    assert np.linalg.det(result.rotation) == pytest.approx(1.0)


def test_procrustes_rejects_zero_weights():
    with pytest.raises(ValueError):
        procrustes(np.eye(3), np.eye(3), weights=np.zeros(3))


def test_collinear_source_rejected(ellipsoid_bvh):
    line = np.outer(np.linspace(0.0, 1.0, 10), [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        check_non_collinear(line)
    with pytest.raises(ValueError):
        icp_align(line, ellipsoid_bvh, IcpConfig())
    with pytest.raises(ValueError):
        check_non_collinear(np.zeros((2, 3)))


def test_icp_recovers_random_transforms(ellipsoid, ellipsoid_bvh):
    rng = np.random.default_rng(8)
    for k in range(50):
        with_scale = k % 2 == 1
        rotation = Rotation.from_rotvec(rng.uniform(-1.0, 1.0, 3) * np.radians(10.0)).as_matrix()
        scale = rng.uniform(0.9, 1.1) if with_scale else 1.0
        truth = SimilarityTransform(rotation, rng.uniform(-0.05, 0.05, 3), scale)
        source = truth.inverse().apply(ellipsoid.positions)
        result = icp_align(source, ellipsoid_bvh, IcpConfig(with_scale=with_scale))
        assert rotation_angle(result.transform.rotation, rotation) < 1e-3
        assert np.abs(result.transform.translation - truth.translation).max() < 1e-4
        assert abs(result.transform.scale - scale) / scale < 1e-4
        assert np.all(np.diff(result.errors) <= 0)


def test_icp_with_scale(ellipsoid, ellipsoid_bvh):
    source = ellipsoid.positions / 2.0
    result = icp_align(source, ellipsoid_bvh, IcpConfig(with_scale=True), init=SimilarityTransform(scale=1.8))
    assert result.transform.scale == pytest.approx(2.0, rel=1e-4)
    np.testing.assert_allclose(result.transform.apply(source), ellipsoid.positions, atol=1e-4)
    assert np.all(np.diff(result.errors) <= 0)


def test_point_to_plane_step_on_exact_fit(ellipsoid):
    normals, _ = face_normals(ellipsoid)
    faces = np.arange(len(ellipsoid.positions)) % ellipsoid.face_count
    targets = ellipsoid.positions
    step = point_to_plane_step(targets, SimilarityTransform(), targets, normals[faces], with_scale=True)
    np.testing.assert_allclose(step.apply(targets), targets, atol=1e-12)


def test_icp_exact_start_converges_immediately(ellipsoid, ellipsoid_bvh):
    result = icp_align(ellipsoid.positions, ellipsoid_bvh, IcpConfig())
    assert result.converged
    assert result.iterations == 1
    assert result.errors[-1] < 1e-12


def test_similarity_transform_algebra():
    rng = np.random.default_rng(6)
    points = rng.normal(size=(5, 3))
    a = SimilarityTransform(Rotation.random(random_state=rng).as_matrix(), rng.normal(size=3), 1.5)
    b = SimilarityTransform(Rotation.random(random_state=rng).as_matrix(), rng.normal(size=3), 0.5)
    np.testing.assert_allclose(a.compose(b).apply(points), a.apply(b.apply(points)), atol=1e-12)
    np.testing.assert_allclose(a.inverse().apply(a.apply(points)), points, atol=1e-12)
    homogeneous = np.c_[points, np.ones(5)] @ a.to_matrix().T
    np.testing.assert_allclose(homogeneous[:, :3], a.apply(points), atol=1e-12)
    assert set(a.to_dict()) == {"rotation", "translation", "scale"}


def test_icp_config_validation():
    assert IcpConfig.from_config(None, {'max_iters': 7}).max_iters == 7
    with pytest.raises(ValueError):
        IcpConfig.from_config(None, {'max_iters': 0})
    with pytest.raises(ValueError):
        IcpConfig.from_config(None, {'tol': 0.0})
