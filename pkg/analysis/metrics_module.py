"""
Metrics Module

Dieses Modul berechnet die Auswertungsmetriken für Rekonstruktion und Registrierung:
Punkt-zu-Oberfläche-Abstand (P2S), Chamfer-Abstand, Normalenbild-Differenz aus
orthographischen Ansichten und Dreiecksqualität (G-avg, Anteil spitzer Winkel).
"""

import logging
import time
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.bvh import Bvh
from core.camera import Camera, orthographic_view
from core.mesh import Mesh, face_normals, min_interior_angles, triangle_quality
from core.raster import scan_triangles

# Logger konfigurieren
logger = logging.getLogger(__name__)

# Meter -> Zentimeter
CM = 100.0

VIEW_NAMES = ("front", "back")


@dataclass
class MetricsConfig:
    """Parameter der Auswertung."""
    resolution: int = 512
    views: Tuple[str, ...] = VIEW_NAMES

    @classmethod
    def from_config(cls, config=None, overrides: Optional[Dict[str, Any]] = None) -> "MetricsConfig":
        cfg = cls()
        if config is not None:
            cfg.resolution = config.getint('Metrics', 'resolution', fallback=cfg.resolution)
            cfg.views = tuple(config.getlist('Metrics', 'views', fallback=list(cfg.views)))
        for key, value in (overrides or {}).items():
            if value is not None:
                setattr(cfg, key, tuple(value) if key == 'views' else value)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.resolution < 1:
            raise ValueError(f"Metrics.resolution muss positiv sein, erhalten {self.resolution}")
        unknown = [v for v in self.views if v not in VIEW_NAMES]
        if unknown or not self.views:
            raise ValueError(f"Unbekannte Ansichten {unknown} (erlaubt: {', '.join(VIEW_NAMES)})")


def _require_non_empty(mesh: Mesh, what: str) -> None:
    if mesh.vertex_count == 0 or mesh.face_count == 0:
        raise ValueError(f"{what} ist leer")


def p2s(pred: Mesh, gt: Mesh, bvh_gt: Optional[Bvh] = None) -> float:
    """
    Mittlerer Abstand der Vertices von pred zur Oberfläche von gt in Zentimetern.

    Raises:
        ValueError: Bei leerem Netz.
    """
    _require_non_empty(pred, "Vorhersage")
    _require_non_empty(gt, "Referenz")
    bvh_gt = bvh_gt if bvh_gt is not None else Bvh(gt)
    closest = bvh_gt.closest_point(pred.positions)
    return float(np.mean(closest.distance)) * CM


def chamfer(a: Mesh, b: Mesh, bvh_a: Optional[Bvh] = None, bvh_b: Optional[Bvh] = None) -> float:
    """Symmetrischer Chamfer-Abstand (p2s(a→b) + p2s(b→a)) / 2 in Zentimetern."""
    return 0.5 * (p2s(a, b, bvh_b) + p2s(b, a, bvh_a))


def default_views(meshes: Sequence[Mesh], resolution: int = 512, names: Sequence[str] = VIEW_NAMES) -> List[Camera]:
    """
    Orthographische Vorder- und Rückansicht, die die gemeinsame Bounding Box einrahmen.
    """
    lows, highs = zip(*(m.bbox() for m in meshes))
    lo = np.min(np.stack(lows), axis=0)
    hi = np.max(np.stack(highs), axis=0)
    center = 0.5 * (lo + hi)
    extent = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-9))
    depth = float(hi[2] - lo[2])
    # 10 % Rand um die Silhouette
    scale = resolution / (1.1 * extent)
    distance = depth + extent
    return [orthographic_view(center, distance, scale, resolution, resolution, back=(name == "back"))
            for name in names]


def render_normals(mesh: Mesh, cam: Camera) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rendert ein Normalenbild im Kameraraum (flache Schattierung, Z-Buffer).

    Returns:
        Tuple[np.ndarray, np.ndarray]: (H, W, 3) Normalen und (H, W) Abdeckung
    """
    pixels, depth, in_front = cam.project(mesh.positions)
    # Pixelzentren liegen im Raster bei ganzzahligen Koordinaten
    tri_xy = (pixels - 0.5)[mesh.faces]
    tri_depth = depth[mesh.faces]
    active = in_front[mesh.faces].all(axis=1)
    normals, degenerate = face_normals(mesh)
    cam_normals = normals @ cam.rotation.T
    pixel_face, _, _ = scan_triangles(tri_xy, cam.height, cam.width, tri_depth, active & ~degenerate)
    coverage = pixel_face >= 0
    image = np.zeros((cam.height, cam.width, 3))
    image[coverage] = cam_normals[pixel_face[coverage]]
    return image, coverage


def normal_image_error(a: Mesh, b: Mesh, views: Sequence[Camera]) -> float:
    """
    Mittlere L2-Differenz der Normalenbilder über Pixel, die in beiden Bildern belegt sind,
    gemittelt über die Ansichten.

    Raises:
        ValueError: Ohne Ansicht oder ohne gemeinsam belegte Pixel.
    """
    if not views:
        raise ValueError("Mindestens eine Ansicht erforderlich")
    per_view = []
    for k, cam in enumerate(views):
        image_a, cov_a = render_normals(a, cam)
        image_b, cov_b = render_normals(b, cam)
        both = cov_a & cov_b
        if not both.any():
            logger.warning(f"Ansicht {k}: keine gemeinsam belegten Pixel")
            continue
        per_view.append(float(np.linalg.norm(image_a[both] - image_b[both], axis=1).mean()))
    if not per_view:
        raise ValueError("Keine gemeinsam belegten Pixel in den Normalenbildern")
    return float(np.mean(per_view))


def mesh_quality_stats(mesh: Mesh) -> Dict[str, float]:
    """
    Dreiecksqualität: Mittelwert von q = 4√3·A/Σl² und Anteil der Dreiecke mit
    einem Innenwinkel unter 30° (in Prozent). Degenerierte Dreiecke zählen mit q = 0.

    Raises:
        ValueError: Wenn alle Dreiecke degeneriert sind.
    """
    quality, degenerate = triangle_quality(mesh)
    if mesh.face_count == 0 or degenerate.all():
        raise ValueError("Keine nicht-degenerierten Dreiecke für die Qualitätsbewertung")
    angles = min_interior_angles(mesh)
    return {
        "g_avg": float(quality.mean()),
        "pct_angle_below_30": float(100.0 * np.count_nonzero(angles < 30.0) / mesh.face_count),
    }


def evaluate(pred: Mesh, gt: Mesh, resolution: int = 512, view_names: Sequence[str] = VIEW_NAMES) -> Dict[str, Any]:
    """
    Vollständiger Auswertungsbericht.

    Returns:
        Dict[str, Any]: p2s_cm, chamfer_cm, normal_l2, g_avg, pct_angle_below_30, wall_time_s
    """
    start_time = time.time()
    bvh_gt = Bvh(gt)
    bvh_pred = Bvh(pred)
    report: Dict[str, Any] = {
        "p2s_cm": p2s(pred, gt, bvh_gt),
        "chamfer_cm": chamfer(pred, gt, bvh_pred, bvh_gt),
        "normal_l2": normal_image_error(pred, gt, default_views([pred, gt], resolution, view_names)),
    }
    report.update(mesh_quality_stats(pred))
    report["wall_time_s"] = time.time() - start_time
    logger.info(f"Auswertung: P2S {report['p2s_cm']:.4f} cm, Chamfer {report['chamfer_cm']:.4f} cm, "
                f"Normalen {report['normal_l2']:.4f}, G-avg {report['g_avg']:.4f}")
    return report
