"""
UV Domain Module

Dieses Modul verbindet Netze und UV-Raster in beide Richtungen: Rasterung von
Positions-, Normalen- und Attributkarten, Rückabtastung auf Vertices, Kodierung und
Anwendung normalprojizierter skalarer Verschiebungen sowie Maskenalgebra.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import binary_dilation

from core.raster import UvRasterizer
from core.template import SemanticTemplate, template_normals
from core.uv_map import UvMap

# Logger konfigurieren
logger = logging.getLogger(__name__)

# Normalen mit kleinerer Länge gelten als undefiniert
ZERO_NORMAL = 1e-9

EIGHT_NEIGHBORHOOD = np.ones((3, 3), dtype=bool)


def _rasterizer(tmpl: SemanticTemplate, resolution, rasterizer: Optional[UvRasterizer]) -> UvRasterizer:
    if rasterizer is not None:
        return rasterizer
    return UvRasterizer.for_template(tmpl, resolution)


def rasterize_attribute_map(tmpl: SemanticTemplate, values, resolution=None,
                            rasterizer: Optional[UvRasterizer] = None) -> UvMap:
    """
    Interpoliert ein Vertexattribut baryzentrisch in alle abgedeckten Texel.

    Args:
        tmpl: Template mit UV-Atlas
        values: (V, K) Attribut pro Vertex
        resolution: Auflösung (int oder (H, W)), entfällt bei übergebenem Rasterizer
        rasterizer: Optional wiederverwendeter Rasterizer

    Returns:
        UvMap: H×W×K Karte; bei überlappenden UV-Dreiecken gewinnt der kleinste Flächenindex
    """
    values = np.asarray(values, dtype=np.float64)
    if len(values) != tmpl.vertex_count:
        raise ValueError(f"Attribut hat {len(values)} Einträge, Template {tmpl.vertex_count} Vertices")
    return _rasterizer(tmpl, resolution, rasterizer).rasterize(values)


def position_map(tmpl: SemanticTemplate, positions, resolution=None,
                 rasterizer: Optional[UvRasterizer] = None) -> UvMap:
    """UV-Positionskarte S für Vertexpositionen mit Template-Konnektivität."""
    return rasterize_attribute_map(tmpl, positions, resolution, rasterizer)


def normal_map(tmpl: SemanticTemplate, positions, resolution=None,
               rasterizer: Optional[UvRasterizer] = None) -> UvMap:
    """UV-Normalenkarte N aus flächengewichteten Vertexnormalen (pro Texel nicht renormiert)."""
    normals, _ = template_normals(tmpl, positions)
    return rasterize_attribute_map(tmpl, normals, resolution, rasterizer)


def resample_vertices_from_map(uv_map: UvMap, tmpl: SemanticTemplate,
                               rasterizer: Optional[UvRasterizer] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Tastet eine Karte an der ersten UV-Position jedes Vertex bilinear ab.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (V, C) Werte und (V,) Flag für Vertices ohne
        abgedeckte Schablone

    Raises:
        ValueError: Wenn die Karte keine Abdeckung hat.
    """
    if not uv_map.coverage.any():
        raise ValueError("UV-Karte ohne Abdeckung")
    raster = _rasterizer(tmpl, uv_map.shape, rasterizer)
    return raster.resample_vertices(uv_map)


def _unit_normals(normals: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    length = np.linalg.norm(normals, axis=-1)
    zero = length < ZERO_NORMAL
    unit = np.divide(normals, length[..., None], out=np.zeros_like(normals), where=~zero[..., None])
    return unit, zero


def encode_displacement(s_sample: UvMap, s_pose: UvMap, n_pose: UvMap) -> Tuple[UvMap, np.ndarray]:
    """
    Skalare Verschiebung entlang der Normalen: d = ((S_sample − S_pose)·N) / ‖N‖.

    Returns:
        Tuple[UvMap, np.ndarray]: Einkanal-Karte und (H, W) Flag für abgedeckte Texel
        mit Nullnormale (dort d = 0)
    """
    s_sample.require_same_grid(s_pose)
    s_sample.require_same_grid(n_pose)
    coverage = s_pose.coverage & n_pose.coverage
    offset = s_sample.data.astype(np.float64) - s_pose.data.astype(np.float64)
    unit, zero = _unit_normals(n_pose.data.astype(np.float64))
    d = np.einsum('ijk,ijk->ij', offset, unit)
    flagged = zero & coverage
    d[flagged] = 0.0
    if flagged.any():
        logger.warning(f"{int(flagged.sum())} Texel mit Nullnormale beim Kodieren der Verschiebung")
    return UvMap(d[:, :, None], coverage), flagged


def apply_displacement(s_base: UvMap, n_base: UvMap, d: UvMap) -> Tuple[UvMap, np.ndarray]:
    """
    Verschiebt eine Positionskarte entlang der normierten Normalen: S = S_base + N̂·d.

    Returns:
        Tuple[UvMap, np.ndarray]: Dreikanal-Karte und (H, W) Flag für Nullnormalen
    """
    s_base.require_same_grid(n_base)
    s_base.require_same_grid(d)
    coverage = s_base.coverage & n_base.coverage
    unit, zero = _unit_normals(n_base.data.astype(np.float64))
    result = s_base.data.astype(np.float64) + unit * d.data[:, :, :1].astype(np.float64)
    flagged = zero & coverage
    if flagged.any():
        logger.warning(f"{int(flagged.sum())} Texel mit Nullnormale beim Anwenden der Verschiebung")
    return UvMap(result, coverage), flagged


def canonical_position_map(s_cano: UvMap, n_cano: UvMap, d: UvMap) -> UvMap:
    """Kanonische transformierte Positionskarte S̄ = S_cano + N̂_cano·d."""
    return apply_displacement(s_cano, n_cano, d)[0]


def compose_prediction(s_base: UvMap, n_base: UvMap, d_pred: UvMap, d_known: UvMap, hole: UvMap) -> UvMap:
    """
    Setzt eine Vorhersage zusammen: innerhalb der Maske die vorhergesagte, außerhalb
    die bekannte Verschiebung, angewendet auf die Basiskarte.
    """
    for other in (n_base, d_pred, d_known, hole):
        s_base.require_same_grid(other)
    h = hole.mask.astype(np.float64)[:, :, None]
    d = d_pred.data[:, :, :1].astype(np.float64) * h + d_known.data[:, :, :1].astype(np.float64) * (1.0 - h)
    return apply_displacement(s_base, n_base, UvMap(d, s_base.coverage))[0]


def combine_masks(h_r: UvMap, h_o: UvMap) -> UvMap:
    """
    Kombinierte Lochmaske H = H_r·(1 − H_o) + H_o.

    Raises:
        ValueError: Bei unterschiedlichen Auflösungen.
    """
    h_r.require_same_grid(h_o, "Masken")
    r = h_r.data[:, :, 0].astype(np.float64)
    o = h_o.data[:, :, 0].astype(np.float64)
    combined = r * (1.0 - o) + o
    return UvMap(combined[:, :, None], h_r.coverage | h_o.coverage)


def dilate_mask(mask: UvMap, iterations: int) -> UvMap:
    """
    Iterierte Dilatation in der 8-Nachbarschaft; Wachstum nur innerhalb der Abdeckung.

    Raises:
        ValueError: Bei negativer Iterationszahl.
    """
    if iterations < 0:
        raise ValueError(f"Iterationen müssen >= 0 sein, erhalten {iterations}")
    if iterations == 0:
        return UvMap.from_mask(mask.mask, mask.coverage)
    grown = binary_dilation(mask.mask, structure=EIGHT_NEIGHBORHOOD, iterations=iterations, mask=mask.coverage)
    return UvMap.from_mask(grown, mask.coverage)


def seam_links(tmpl: SemanticTemplate, resolution=None, rasterizer: Optional[UvRasterizer] = None) -> np.ndarray:
    """Texelpaare beidseits der UV-Nähte als (L, 2) lineare Indizes."""
    return _rasterizer(tmpl, resolution, rasterizer).seam_links()
