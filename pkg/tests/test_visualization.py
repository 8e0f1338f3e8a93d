"""
Tests für die PNG-Vorschauen.
"""

import os

import numpy as np

from analysis.visualization_module import VisualizationModule
from core.uv_map import UvMap
from management.config_manager import ConfigManager
from management.fixture_generator import sphere_template


def test_create_all_previews(tmp_path):
    coverage = np.zeros((16, 16), dtype=bool)
    coverage[2:14, 2:14] = True
    mask = np.zeros((16, 16), dtype=bool)
    mask[5:8, 5:8] = True
    displacement = UvMap(np.linspace(0.0, 0.1, 256).reshape(16, 16, 1), coverage)

    viz = VisualizationModule(str(tmp_path), ConfigManager.from_dict({'Output': {'preview_dpi': 50}}))
    created = viz.create_all_previews(sphere_template(1).mesh, displacement, UvMap.from_mask(mask, coverage))
    assert set(created) == {"quality_histogram", "displacement", "holes"}
    for path in created.values():
        assert os.path.dirname(path) == os.path.join(str(tmp_path), "previews")
        assert os.path.getsize(path) > 0


def test_previews_skip_missing_inputs(tmp_path):
    assert VisualizationModule(str(tmp_path)).create_all_previews() == {}
