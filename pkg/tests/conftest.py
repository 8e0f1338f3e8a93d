"""
Gemeinsame Fixtures für die Tests: analytische Templates, Zielnetze und Testszenen.
"""

import os

import numpy as np
import pytest

from core.bvh import Bvh
from core.mesh import Mesh
from management.fixture_generator import (capsule_template, generate_fixture, hemisphere_target,
                                          sphere_target, sphere_template)


def pytest_collection_modifyitems(config, items):
    if os.environ.get("SEMREG_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="nur mit SEMREG_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def sphere_tmpl():
    return sphere_template(2)


@pytest.fixture(scope="session")
def sphere_tmpl_coarse():
    return sphere_template(1)


@pytest.fixture(scope="session")
def capsule_tmpl():
    return capsule_template(3)


@pytest.fixture(scope="session")
def sphere_mesh():
    return sphere_target()


@pytest.fixture(scope="session")
def sphere_bvh(sphere_mesh):
    return Bvh(sphere_mesh)


@pytest.fixture(scope="session")
def hemisphere_mesh():
    return hemisphere_target()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_square():
    """Zwei Dreiecke in der Ebene z = 0 über [0, 1]²."""
    positions = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    return Mesh(positions, faces)


def box_mesh(size=(1.0, 0.6, 0.3)) -> Mesh:
    """Geschlossener Quader mit nach außen zeigenden Normalen."""
    half = np.asarray(size) / 2.0
    corners = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=np.float64) * half
    faces = np.array([
        [0, 1, 3], [0, 3, 2],  # x-
        [4, 6, 7], [4, 7, 5],  # x+
        [0, 4, 5], [0, 5, 1],  # y-
        [2, 3, 7], [2, 7, 6],  # y+
        [0, 2, 6], [0, 6, 4],  # z-
        [1, 5, 7], [1, 7, 3],  # z+
    ])
    return Mesh(corners, faces)


@pytest.fixture
def box():
    return box_mesh()


@pytest.fixture(scope="session")
def spheres_scene(tmp_path_factory):
    out_dir = str(tmp_path_factory.mktemp("spheres"))
    return generate_fixture("spheres", out_dir, image_resolution=128)


@pytest.fixture(scope="session")
def capsule_scene(tmp_path_factory):
    out_dir = str(tmp_path_factory.mktemp("capsule"))
    return generate_fixture("capsule", out_dir, image_resolution=128)
