"""
Fixture Generator Modul

Dieses Modul erzeugt analytische Testszenen: ein Kugel-Template mit Zwei-Karten-Atlas,
ein prozedurales Kapsel-Template mit Gelenkkette und Körperteil-Labels sowie passende
Zielnetze, Distanzfelder, Posen, Kameras, synthetische Bilder und eine
ausführbare pipeline.ini.
"""

import os
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
import trimesh

from core.camera import Camera
from core.mesh import Mesh, vertex_normals
from core.mesh_io import from_trimesh, save_mesh
from core.sdf import GridSdf, SphereSdf, sdf_from_mesh
from core.template import (DEFAULT_LABEL_NAMES, Pose, SemanticTemplate, lbs_pose, save_template,
                           subdivide_midpoint)
from core.uv_map import save_image
from core.utils import ensure_dir
from management.config_manager import ConfigManager

# Logger konfigurieren
logger = logging.getLogger(__name__)

FIXTURES = ("spheres", "capsule", "hemisphere")

TARGET_RADIUS = 1.2

# Kartenmittelpunkte und Radius des Zwei-Karten-Atlas
CHART_CENTERS = (np.array([0.25, 0.5]), np.array([0.75, 0.5]))
CHART_RADIUS = 0.23

CAPSULE_LENGTH = 1.0
CAPSULE_RADIUS = 0.2
# Abstand der Kapsel-Zieloberfläche vom geposten Template
CAPSULE_OFFSET = 0.02


def icosahedron() -> Tuple[np.ndarray, np.ndarray]:
    """
    Ikosaeder mit Vertices auf der Einheitskugel, Pol bei +z.

    Reihenfolge: Nordpol, oberer Ring (5), unterer Ring (5, um 36° versetzt), Südpol.
    Die Flächen sind nach außen orientiert.
    """
    z = 1.0 / np.sqrt(5.0)
    ring = np.sqrt(1.0 - z * z)
    upper = [(ring * np.cos(2 * np.pi * k / 5), ring * np.sin(2 * np.pi * k / 5), z) for k in range(5)]
    lower = [(ring * np.cos(2 * np.pi * (k + 0.5) / 5), ring * np.sin(2 * np.pi * (k + 0.5) / 5), -z)
             for k in range(5)]
    positions = np.array([(0.0, 0.0, 1.0)] + upper + lower + [(0.0, 0.0, -1.0)])
    faces = []
    for k in range(5):
        u0, u1 = 1 + k, 1 + (k + 1) % 5
        l0, l1 = 6 + k, 6 + (k + 1) % 5
        faces.append((0, u0, u1))
        faces.append((u0, l0, u1))
        faces.append((u1, l0, l1))
        faces.append((11, l1, l0))
    return positions, np.array(faces, dtype=np.int64)


def two_chart_atlas(positions: np.ndarray, faces: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Azimutaler Zwei-Karten-Atlas um die Pole ±z.

    Flächen mit Schwerpunkt z >= 0 kommen in die nördliche Karte, die übrigen in die
    südliche; Vertices auf der Naht erhalten je Karte eine eigene UV-Position.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (U, 2) UV-Positionen und (F, 3) UV-Flächen
    """
    unit = positions / np.linalg.norm(positions, axis=1, keepdims=True)
    polar = np.arccos(np.clip(unit[:, 2], -1.0, 1.0))
    azimuth = np.arctan2(unit[:, 1], unit[:, 0])
    north = unit[faces].mean(axis=1)[:, 2] >= 0.0

    theta_max = max(polar[faces[north]].max(), (np.pi - polar[faces[~north]]).max())
    uv_positions: List[np.ndarray] = []
    uv_index: Dict[Tuple[int, int], int] = {}
    uv_faces = np.zeros_like(faces)
    for f, corners in enumerate(faces):
        chart = 0 if north[f] else 1
        for c, v in enumerate(corners):
            key = (chart, int(v))
            if key not in uv_index:
                if chart == 0:
                    r, phi = polar[v], azimuth[v]
                else:
                    r, phi = np.pi - polar[v], -azimuth[v]
                offset = CHART_RADIUS * (r / theta_max) * np.array([np.cos(phi), np.sin(phi)])
                uv_index[key] = len(uv_positions)
                uv_positions.append(CHART_CENTERS[chart] + offset)
            uv_faces[f, c] = uv_index[key]
    return np.array(uv_positions), uv_faces


def _base_template(positions, faces, weights, joints, parents, labels, canonical: Optional[Pose] = None):
    uv_positions, uv_faces = two_chart_atlas(positions, faces)
    canonical = canonical if canonical is not None else Pose.identity(len(joints))
    return SemanticTemplate(Mesh(positions, faces), uv_positions, uv_faces, weights, joints, parents,
                            canonical, labels, list(DEFAULT_LABEL_NAMES))


def sphere_template(levels: int = 2) -> SemanticTemplate:
    """
    Kugel-Template: Ikosaeder, levels-mal unterteilt und auf die Einheitskugel projiziert.

    Ein Gelenk im Ursprung, alle Vertices mit Label "body".
    """
    positions, faces = icosahedron()
    n = len(positions)
    tmpl = _base_template(positions, faces, np.ones((n, 1)), np.zeros((1, 3)), np.array([-1]),
                          np.zeros(n, dtype=np.int64))
    for _ in range(levels):
        tmpl = subdivide_midpoint(tmpl)
        projected = tmpl.mesh.positions / np.linalg.norm(tmpl.mesh.positions, axis=1, keepdims=True)
        tmpl = tmpl.with_positions(projected)
    return tmpl


def _capsule_shape(unit: np.ndarray) -> np.ndarray:
    """Streckt die Einheitskugel entlang y zu einer Kapsel."""
    stretch = 0.5 * CAPSULE_LENGTH * np.tanh(unit[:, 1] / 0.25) / np.tanh(1.0 / 0.25)
    return np.stack([CAPSULE_RADIUS * unit[:, 0], CAPSULE_RADIUS * unit[:, 1] + stretch,
                     CAPSULE_RADIUS * unit[:, 2]], axis=1)


CAPSULE_JOINTS = np.array([[0.0, 0.0, 0.0], [0.0, 0.25, 0.0], [0.0, 0.5, 0.0], [0.0, -0.25, 0.0]])
CAPSULE_PARENTS = np.array([-1, 0, 1, 0])


def capsule_template(levels: int = 3) -> SemanticTemplate:
    """
    Prozedurale Kapselfigur mit vier Gelenken (Becken, Brust, Kopf, Beine).

    Skinning-Gewichte fallen gaußförmig mit dem Abstand entlang y ab; vorne oben liegt
    das Label "face", unten links/rechts "left-foot"/"right-foot".
    """
    sphere = sphere_template(levels)
    unit = sphere.mesh.positions
    positions = _capsule_shape(unit)
    distance = np.abs(positions[:, 1:2] - CAPSULE_JOINTS[None, :, 1])
    weights = np.exp(-(distance / 0.12) ** 2)
    weights /= weights.sum(axis=1, keepdims=True)
    labels = np.zeros(len(positions), dtype=np.int64)
    labels[(unit[:, 1] > 0.6) & (unit[:, 2] > 0.2)] = DEFAULT_LABEL_NAMES.index("face")
    labels[(unit[:, 1] < -0.8) & (unit[:, 0] > 0.0)] = DEFAULT_LABEL_NAMES.index("left-foot")
    labels[(unit[:, 1] < -0.8) & (unit[:, 0] <= 0.0)] = DEFAULT_LABEL_NAMES.index("right-foot")
    return SemanticTemplate(Mesh(positions, sphere.mesh.faces), sphere.uv_positions, sphere.uv_faces,
                            weights, CAPSULE_JOINTS, CAPSULE_PARENTS, Pose.identity(4), labels,
                            list(DEFAULT_LABEL_NAMES), sphere.subdivision_level, sphere.base_counts,
                            sphere.level_faces, sphere.level_uv_faces)


def capsule_target_pose() -> Pose:
    """Feste Zielpose der Kapsel: Kopf leicht geneigt, Beine leicht angewinkelt."""
    rotations = np.tile(np.eye(3), (4, 1, 1))
    angle = np.radians(15.0)
    rotations[2] = [[1.0, 0.0, 0.0], [0.0, np.cos(angle), -np.sin(angle)], [0.0, np.sin(angle), np.cos(angle)]]
    rotations[3] = [[np.cos(angle), -np.sin(angle), 0.0], [np.sin(angle), np.cos(angle), 0.0], [0.0, 0.0, 1.0]]
    return Pose(rotations, np.zeros(3))


def sphere_target(radius: float = TARGET_RADIUS, subdivisions: int = 5) -> Mesh:
    return from_trimesh(trimesh.creation.icosphere(subdivisions=subdivisions, radius=radius))


def hemisphere_target(radius: float = TARGET_RADIUS, subdivisions: int = 5) -> Mesh:
    """Obere Halbkugel (alle Dreiecke mit Schwerpunkt z >= 0) als offenes Netz."""
    sphere = trimesh.creation.icosphere(subdivisions=subdivisions, radius=radius)
    keep = sphere.triangles_center[:, 2] >= 0.0
    part = trimesh.Trimesh(sphere.vertices, sphere.faces[keep], process=False)
    part.remove_unreferenced_vertices()
    return from_trimesh(part)


def grid_from_field(field, lo, hi, dims: int = 64) -> GridSdf:
    """Tastet ein Distanzfeld auf einem regelmäßigen Gitter ab."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    spacing = (hi - lo) / (dims - 1)
    axes = [lo[k] + spacing[k] * np.arange(dims) for k in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, 3)
    return GridSdf(field.query(grid).reshape(dims, dims, dims), lo, spacing)


def synthetic_inputs(target: Mesh, resolution: int = 256) -> Tuple[Camera, np.ndarray, np.ndarray, np.ndarray]:
    """
    Orthographische Frontkamera, Farbverlaufsbild und gerenderte Normalenkarten.

    Returns:
        Tuple: Kamera, RGB-Bild, vordere und hintere Normalenkarte (kodiert in [0, 1])
    """
    from analysis.metrics_module import default_views, render_normals

    front, back = default_views([target], resolution)
    yy, xx = np.mgrid[0:resolution, 0:resolution] / float(resolution - 1)
    image = np.stack([xx, yy, 0.5 * np.ones_like(xx)], axis=-1)
    maps = []
    for cam in (front, back):
        normals, coverage = render_normals(target, cam)
        encoded = np.where(coverage[:, :, None], 0.5 * (normals + 1.0), 0.5)
        maps.append(encoded)
    return front, image, maps[0], maps[1]


def write_pipeline_config(out_dir: str, fixture: str, has_sdf: bool) -> str:
    """Schreibt eine ausführbare pipeline.ini für die Szene."""
    config = ConfigManager.from_dict({
        'Pipeline': {
            'template': 'template.json',
            'target': 'target.obj',
            'pose': 'pose.json',
            'output_dir': 'output',
            'uv_resolution': 256,
            'subdivide': 0,
            'image': 'image.png',
            'camera': 'camera.json',
            'front_normal': 'front_normal.png',
            'back_normal': 'back_normal.png',
            'ground_truth': 'target.obj' if fixture != 'hemisphere' else '',
            'texture': True,
            'evaluate': fixture != 'hemisphere',
        },
        'SNS': {'range': 0.5, 'min_component': 10},
        'Completion': {'dilate': 2, 'blend_band': 4},
        'Refinement': {'smooth_lambda': 0.5, 'smooth_iters': 2},
        'Texturing': {'resolution': 256, 'erode_margin': 2},
        'Metrics': {'resolution': 128, 'views': 'front,back'},
        'Output': {'previews': False, 'progress': False},
        'Logging': {'log_level': 'INFO', 'log_file': 'console'},
        'Advanced': {'workers': 1},
    })
    path = os.path.join(out_dir, 'pipeline.ini')
    config.save(path)
    if has_sdf:
        logger.debug(f"Distanzfeld für '{fixture}' liegt als target.sdf vor")
    return path


def generate_fixture(name: str, out_dir: str, image_resolution: int = 256) -> Dict[str, str]:
    """
    Erzeugt eine komplette Testszene in out_dir.

    Args:
        name: "spheres", "capsule" oder "hemisphere"
        out_dir: Zielverzeichnis
        image_resolution: Kantenlänge der synthetischen Bilder

    Returns:
        Dict[str, str]: Geschriebene Dateien nach Rolle

    Raises:
        ValueError: Bei unbekanntem Szenennamen.
    """
    if name not in FIXTURES:
        raise ValueError(f"Unbekannte Szene '{name}' (verfügbar: {', '.join(FIXTURES)})")
    if not ensure_dir(out_dir):
        raise OSError(f"Verzeichnis konnte nicht angelegt werden: {out_dir}")

    files: Dict[str, str] = {}
    sdf = None
    if name == "capsule":
        tmpl = capsule_template()
        pose = capsule_target_pose()
        posed = lbs_pose(tmpl, tmpl.mesh.positions, pose)
        normals, _ = vertex_normals(Mesh(posed, tmpl.mesh.faces))
        target = Mesh(posed + CAPSULE_OFFSET * normals, tmpl.mesh.faces)
        sdf = sdf_from_mesh(target, dims=64, padding=0.1)
    else:
        tmpl = sphere_template()
        pose = Pose.identity(tmpl.joint_count)
        if name == "spheres":
            target = sphere_target()
            sdf = grid_from_field(SphereSdf(TARGET_RADIUS), [-1.5] * 3, [1.5] * 3, 64)
        else:
            target = hemisphere_target()

    files["template"] = os.path.join(out_dir, "template.json")
    save_template(tmpl, files["template"])
    files["target"] = os.path.join(out_dir, "target.obj")
    save_mesh(files["target"], target)
    if sdf is not None:
        files["sdf"] = os.path.join(out_dir, "target.sdf")
        sdf.save(files["sdf"])
    files["pose"] = os.path.join(out_dir, "pose.json")
    pose.save(files["pose"])

    camera, image, front, back = synthetic_inputs(target, image_resolution)
    files["camera"] = os.path.join(out_dir, "camera.json")
    camera.save(files["camera"])
    for role, data in (("image", image), ("front_normal", front), ("back_normal", back)):
        files[role] = os.path.join(out_dir, f"{role}.png")
        save_image(data, files[role])
    files["config"] = write_pipeline_config(out_dir, name, sdf is not None)
    logger.info(f"Szene '{name}' erzeugt in {out_dir}: {tmpl}, Ziel {target}")
    return files

