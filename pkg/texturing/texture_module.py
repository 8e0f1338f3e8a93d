"""
Texture Module

Dieses Modul erzeugt Texturen für das semantische Netz: Sichtbarkeit der Vertices
aus der Kamera, partielle Textur aus dem Eingabebild und Übertragung von
Vertexfarben eines Scans nach ICP-Ausrichtung.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from core.bvh import Bvh
from core.camera import Camera, sample_image
from core.mesh import Mesh
from core.raster import UvRasterizer
from core.template import SemanticTemplate
from core.uv_map import UvMap
from registration.uv_domain import dilate_mask, position_map, rasterize_attribute_map
from texturing.icp_module import IcpConfig, IcpResult, icp_align

# Logger konfigurieren
logger = logging.getLogger(__name__)


@dataclass
class TextureConfig:
    """Parameter für Sichtbarkeit und partielle Texturen."""
    resolution: int = 1024
    erode_margin: int = 2
    visibility_eps: float = 1e-4

    @classmethod
    def from_config(cls, config=None, overrides: Optional[Dict[str, Any]] = None) -> "TextureConfig":
        cfg = cls()
        if config is not None:
            cfg.resolution = config.getint('Texturing', 'resolution', fallback=cfg.resolution)
            cfg.erode_margin = config.getint('Texturing', 'erode_margin', fallback=cfg.erode_margin)
            cfg.visibility_eps = config.getfloat('Texturing', 'visibility_eps', fallback=cfg.visibility_eps)
        for key, value in (overrides or {}).items():
            if value is not None:
                setattr(cfg, key, value)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        res = int(self.resolution)
        if res < 1 or res > 4096 or res & (res - 1):
            raise ValueError(f"Texturing.resolution muss eine Zweierpotenz bis 4096 sein, erhalten {res}")
        if self.erode_margin < 0:
            raise ValueError(f"Texturing.erode_margin darf nicht negativ sein, erhalten {self.erode_margin}")
        if self.visibility_eps <= 0:
            raise ValueError(f"Texturing.visibility_eps muss positiv sein, erhalten {self.visibility_eps}")


def vertex_visibility(mesh: Mesh, bvh: Bvh, cam: Camera, eps: float = 1e-4) -> np.ndarray:
    """
    Sichtbarkeit jedes Vertex aus der Kamera.

    Von v + ε·dir wird ein Strahl zur Kamera geschossen (orthographisch entgegen der
    Blickrichtung, Lochkamera zum Zentrum); jeder Treffer macht den Vertex unsichtbar.

    Args:
        mesh: Netz
        bvh: BVH über demselben Netz
        cam: Kamera
        eps: Versatz relativ zur Boxdiagonale

    Returns:
        np.ndarray: (V,) True für sichtbare Vertices
    """
    offset = eps * mesh.bbox_diagonal()
    directions, t_max = cam.directions_to_camera(mesh.positions)
    origins = mesh.positions + offset * directions
    t_max = np.maximum(t_max - offset, 0.0)
    reachable = t_max > 0
    visible = np.zeros(mesh.vertex_count, dtype=bool)
    if reachable.any():
        hits = bvh.raycast_batch(origins[reachable], directions[reachable], 0.0, t_max[reachable])
        visible[reachable] = ~hits.hit
    logger.info(f"Sichtbarkeit: {int(visible.sum())}/{mesh.vertex_count} Vertices sichtbar")
    return visible


def sample_partial_texture(mesh: Mesh, tmpl: SemanticTemplate, image: np.ndarray, cam: Camera,
                           cfg: TextureConfig, bvh: Optional[Bvh] = None,
                           rasterizer: Optional[UvRasterizer] = None) -> Tuple[UvMap, UvMap]:
    """
    Partielle Textur aus dem Eingabebild.

    Ein Texel ist sichtbar, wenn alle drei Ecken seines UV-Dreiecks sichtbar sind und
    sein 3D-Punkt ins Bild projiziert. Der Rand der Sichtbarkeitsmaske wird um
    erode_margin Texel zurückgenommen; nur sichtbare Texel erhalten eine Farbe.

    Returns:
        Tuple[UvMap, UvMap]: RGB-Textur und Sichtbarkeitsmaske
    """
    if mesh.vertex_count != tmpl.vertex_count:
        raise ValueError(f"Netz hat {mesh.vertex_count} Vertices, Template {tmpl.vertex_count}")
    image = np.asarray(image, dtype=np.float64)
    if image.shape[:2] != (cam.height, cam.width):
        raise ValueError(f"Bildgröße {image.shape[1]}x{image.shape[0]} passt nicht zur Kamera "
                         f"{cam.width}x{cam.height}")
    geometry = Mesh(mesh.positions, tmpl.mesh.faces)
    bvh = bvh if bvh is not None else Bvh(geometry)
    raster = rasterizer if rasterizer is not None else UvRasterizer.for_template(tmpl, cfg.resolution)

    visible_vertex = vertex_visibility(geometry, bvh, cam, cfg.visibility_eps)
    face_visible = visible_vertex[tmpl.mesh.faces].all(axis=1)
    visible = raster.texels_of_faces(face_visible)

    s_map = position_map(tmpl, geometry.positions, rasterizer=raster)
    coverage = raster.coverage
    points = s_map.data[coverage].astype(np.float64)
    pixels, _, in_front = cam.project(points)
    in_image = np.zeros(coverage.shape, dtype=bool)
    in_image[coverage] = in_front & cam.in_frame(pixels)
    visible &= in_image

    hidden = UvMap.from_mask(coverage & ~visible, coverage)
    visible = coverage & ~dilate_mask(hidden, cfg.erode_margin).mask

    colors = np.zeros((int(coverage.sum()), 3))
    inside = visible[coverage]
    if inside.any():
        colors[inside] = sample_image(image, pixels[inside])[:, :3]
    texture = np.zeros(coverage.shape + (3,))
    texture[coverage] = colors
    logger.info(f"Partielle Textur: {int(visible.sum())}/{int(coverage.sum())} Texel sichtbar")
    return UvMap(texture, coverage), UvMap.from_mask(visible, coverage)


def transfer_vertex_colors(semantic: Mesh, scan: Mesh, bvh_scan: Bvh, tmpl: Optional[SemanticTemplate] = None,
                           icp_cfg: Optional[IcpConfig] = None, resolution: int = 1024,
                           rasterizer: Optional[UvRasterizer] = None) -> Tuple[np.ndarray, Optional[UvMap], IcpResult]:
    """
    Überträgt die Farben eines Scans auf die Vertices des semantischen Netzes.

    Nach der ICP-Ausrichtung erhält jeder Vertex die baryzentrisch interpolierte Farbe
    des nächsten Punktes auf der Scanoberfläche; mit Template wird zusätzlich eine
    Textur gebacken.

    Returns:
        Tuple: (V, 3) Farben, gebackene Textur (oder None ohne Template), ICP-Ergebnis

    Raises:
        ValueError: Wenn der Scan keine Vertexfarben hat.
    """
    if scan.colors is None:
        raise ValueError("Scan ohne Vertexfarben")
    icp = icp_align(semantic.positions, bvh_scan, icp_cfg or IcpConfig())
    aligned = icp.transform.apply(semantic.positions)
    closest = bvh_scan.closest_point(aligned)
    corners = scan.faces[closest.face]
    colors = np.einsum('vk,vkc->vc', closest.bary, scan.colors[corners])
    colors = np.clip(colors, 0.0, 1.0)
    texture = None
    if tmpl is not None:
        if semantic.vertex_count != tmpl.vertex_count:
            raise ValueError(f"Netz hat {semantic.vertex_count} Vertices, Template {tmpl.vertex_count}")
        texture = rasterize_attribute_map(tmpl, colors, resolution, rasterizer)
    logger.info(f"Farbübertragung: {semantic.vertex_count} Vertices, "
                f"mittlerer Abstand nach ICP {float(closest.distance.mean()):.4g} m")
    return colors, texture, icp
