"""
Refinement Module

Dieses Modul enthält den nicht-neuronalen Teil der Verfeinerung: Laplace-Glättung,
Projektion von Bild und Normalenkarten in den UV-Raum, Anwendung einer extern
bereitgestellten Verschiebungskarte z sowie die zugehörigen Fehlermaße.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from core.camera import Camera, sample_image
from core.mesh import Mesh, vertex_adjacency
from core.raster import UvRasterizer
from core.template import SemanticTemplate
from core.uv_map import UvMap, load_image, load_normal_image
from registration.uv_domain import apply_displacement, encode_displacement, normal_map, position_map

# Logger konfigurieren
logger = logging.getLogger(__name__)

# Kanalbelegung der projizierten Merkmale
FEATURE_CHANNELS = {"rgb": (0, 3), "front_normal": (3, 6), "back_normal": (6, 9), "depth": (9, 10)}


@dataclass
class RefinementConfig:
    """Parameter der Glättung vor dem Anwenden der Verschiebung."""
    smooth_lambda: float = 0.5
    smooth_iters: int = 2
    uv_resolution: int = 1024

    @classmethod
    def from_config(cls, config=None, overrides: Optional[Dict[str, Any]] = None) -> "RefinementConfig":
        cfg = cls()
        if config is not None:
            cfg.smooth_lambda = config.getfloat('Refinement', 'smooth_lambda', fallback=cfg.smooth_lambda)
            cfg.smooth_iters = config.getint('Refinement', 'smooth_iters', fallback=cfg.smooth_iters)
            cfg.uv_resolution = config.getint('Pipeline', 'uv_resolution', fallback=cfg.uv_resolution)
        for key, value in (overrides or {}).items():
            if value is not None:
                setattr(cfg, key, value)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not 0.0 < self.smooth_lambda <= 1.0:
            raise ValueError(f"Refinement.smooth_lambda muss in (0, 1] liegen, erhalten {self.smooth_lambda}")
        if self.smooth_iters < 0:
            raise ValueError(f"Refinement.smooth_iters darf nicht negativ sein, erhalten {self.smooth_iters}")


@dataclass
class ImageStack:
    """Eingabebild und Normalenkarten (vorn/hinten) in gleicher Auflösung."""
    image: np.ndarray
    front_normal: np.ndarray
    back_normal: np.ndarray

    def __post_init__(self):
        shapes = {np.asarray(a).shape[:2] for a in (self.image, self.front_normal, self.back_normal)}
        if len(shapes) != 1:
            raise ValueError(f"Bild und Normalenkarten haben unterschiedliche Auflösungen: {sorted(shapes)}")

    @property
    def height(self) -> int:
        return int(np.asarray(self.image).shape[0])

    @property
    def width(self) -> int:
        return int(np.asarray(self.image).shape[1])

    @classmethod
    def load(cls, image_path: str, front_path: str, back_path: str) -> "ImageStack":
        return cls(load_image(image_path), load_normal_image(front_path), load_normal_image(back_path))


def laplacian_smooth(mesh: Mesh, lam: float, iterations: int,
                     fixed: Optional[np.ndarray] = None) -> Tuple[Mesh, np.ndarray]:
    """
    Uniforme Laplace-Glättung v ← v + λ·(Nachbarmittel − v) mit simultaner Aktualisierung.

    Args:
        mesh: Eingabenetz
        lam: Schrittweite λ in (0, 1]
        iterations: Anzahl der Iterationen (0 = unverändert)
        fixed: Optionale (V,) Maske festgehaltener Vertices

    Returns:
        Tuple[Mesh, np.ndarray]: Geglättetes Netz und (V,) Flag für isolierte Vertices
    """
    if iterations < 0:
        raise ValueError(f"Iterationen müssen >= 0 sein, erhalten {iterations}")
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lambda muss in (0, 1] liegen, erhalten {lam}")
    adjacency = vertex_adjacency(mesh)
    degree = np.asarray(adjacency.sum(axis=1)).reshape(-1)
    isolated = degree == 0
    if isolated.any():
        logger.warning(f"{int(isolated.sum())} isolierte Vertices bleiben bei der Glättung unverändert")
    movable = ~isolated
    if fixed is not None:
        movable &= ~np.asarray(fixed, dtype=bool)
    positions = mesh.positions.copy()
    safe_degree = np.where(isolated, 1.0, degree)[:, None]
    for _ in range(iterations):
        mean = (adjacency @ positions) / safe_degree
        positions[movable] += lam * (mean[movable] - positions[movable])
    return mesh.with_positions(positions), isolated


def project_image_to_uv(stack: ImageStack, positions: UvMap, cam: Camera) -> Tuple[UvMap, np.ndarray]:
    """
    Projiziert Bild und Normalenkarten auf alle abgedeckten Texel einer Positionskarte.

    Kanäle: RGB (0–2), vordere Normale (3–5), hintere Normale (6–8, gespiegelt
    abgetastet), Kameratiefe (9). Sichtbare und verdeckte Texel werden gleichermaßen
    befüllt; Punkte außerhalb des Bildes oder hinter der Kamera erhalten Nullen.

    Returns:
        Tuple[UvMap, np.ndarray]: 10-Kanal-Merkmalskarte und (H, W) Flag außerhalb des Bildes
    """
    if positions.channels < 3:
        raise ValueError(f"Positionskarte benötigt 3 Kanäle, erhalten {positions.channels}")
    if (stack.width, stack.height) != (cam.width, cam.height):
        raise ValueError(f"Bildgröße {stack.width}x{stack.height} passt nicht zur Kamera {cam.width}x{cam.height}")
    h, w = positions.shape
    coverage = positions.coverage
    points = positions.data[coverage][:, :3].astype(np.float64)
    pixels, depth, in_front = cam.project(points)
    inside = in_front & cam.in_frame(pixels)

    features = np.zeros((len(points), 10))
    if inside.any():
        px = pixels[inside]
        mirrored = np.stack([cam.width - px[:, 0], px[:, 1]], axis=1)
        features[inside, 0:3] = sample_image(stack.image, px)
        features[inside, 3:6] = sample_image(stack.front_normal, px)
        features[inside, 6:9] = sample_image(stack.back_normal, mirrored)
        features[inside, 9] = depth[inside]

    out_of_frame = np.zeros((h, w), dtype=bool)
    out_of_frame[coverage] = ~inside
    if (~inside).any():
        logger.warning(f"{int((~inside).sum())} Texel außerhalb des Bildes oder hinter der Kamera")
    data = np.zeros((h, w, 10))
    data[coverage] = features
    return UvMap(data, coverage), out_of_frame


def _shared_coverage(maps: List[UvMap]) -> np.ndarray:
    coverage = maps[0].coverage.copy()
    for other in maps[1:]:
        maps[0].require_same_grid(other)
        coverage &= other.coverage
    if not coverage.any():
        raise ValueError("Keine gemeinsame Abdeckung der UV-Karten")
    return coverage


def displacement_error(z: UvMap, s_c: UvMap, s_l: UvMap, n_l: UvMap) -> float:
    """Mittlerer quadratischer Abstand zwischen z und der normalprojizierten Zielverschiebung."""
    coverage = _shared_coverage([z, s_c, s_l, n_l])
    target, _ = encode_displacement(s_c, s_l, n_l)
    diff = z.data[:, :, 0].astype(np.float64) - target.data[:, :, 0].astype(np.float64)
    return float(np.mean(diff[coverage] ** 2))


def normal_map_error(n_a: UvMap, n_b: UvMap) -> float:
    """Mittlere quadrierte Normalendifferenz (Summe über Kanäle) über der gemeinsamen Abdeckung."""
    coverage = _shared_coverage([n_a, n_b])
    diff = n_a.data.astype(np.float64) - n_b.data.astype(np.float64)
    return float(np.mean((diff ** 2).sum(axis=2)[coverage]))


def refine_apply(mesh: Mesh, tmpl: SemanticTemplate, z: UvMap, cfg: RefinementConfig,
                 rasterizer: Optional[UvRasterizer] = None) -> Mesh:
    """
    Glättet das Netz und verschiebt es entlang der geglätteten Normalen um z.

    Vertices ohne abgedeckte UV-Schablone behalten ihre geglättete Position.
    """
    if mesh.vertex_count != tmpl.vertex_count:
        raise ValueError(f"Netz hat {mesh.vertex_count} Vertices, Template {tmpl.vertex_count}")
    raster = rasterizer if rasterizer is not None else UvRasterizer.for_template(tmpl, z.shape)
    smoothed, _ = laplacian_smooth(Mesh(mesh.positions, tmpl.mesh.faces), cfg.smooth_lambda, cfg.smooth_iters)
    s_l = position_map(tmpl, smoothed.positions, rasterizer=raster)
    n_l = normal_map(tmpl, smoothed.positions, rasterizer=raster)
    refined_map, _ = apply_displacement(s_l, n_l, z)
    positions, flagged = raster.resample_vertices(refined_map)
    positions[flagged] = smoothed.positions[flagged]
    logger.info(f"Verfeinerung angewendet: {tmpl.vertex_count - int(flagged.sum())} Vertices verschoben")
    return Mesh(positions, tmpl.mesh.faces, mesh.colors)


def refine_iterate(mesh: Mesh, tmpl: SemanticTemplate, z_maps: List[UvMap], cfg: RefinementConfig,
                   rasterizer: Optional[UvRasterizer] = None) -> Mesh:
    """Iterative Verfeinerung: für jede Karte glätten, anwenden und als nächste Eingabe verwenden."""
    current = mesh
    for k, z in enumerate(z_maps):
        current = refine_apply(current, tmpl, z, cfg, rasterizer)
        logger.debug(f"Verfeinerungsiteration {k + 1}/{len(z_maps)} abgeschlossen")
    return current
