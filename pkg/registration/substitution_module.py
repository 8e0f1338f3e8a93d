"""
Substitution Module

Dieses Modul ersetzt ein Körperteil eines vervollständigten semantischen Netzes durch
Spendergeometrie mit derselben semantischen Konnektivität (z. B. ein detaillierteres
Gesicht). Der Spenderteil wird per ICP mit Skalierung ausgerichtet und die Naht wird
geglättet.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from scipy.sparse.csgraph import dijkstra
from scipy.spatial.transform import Rotation

from core.bvh import Bvh
from core.mesh import Mesh, vertex_adjacency, vertex_normals
from core.raster import UvRasterizer
from core.template import SemanticTemplate
from core.uv_map import UvMap
from refinement.refinement_module import laplacian_smooth
from registration.uv_domain import resample_vertices_from_map
from texturing.icp_module import IcpConfig, SimilarityTransform, icp_align

# Logger konfigurieren
logger = logging.getLogger(__name__)

UP = np.array([0.0, 0.0, 1.0])


@dataclass
class SubstitutionConfig:
    """Parameter für Ausrichtung und Nahtglättung."""
    band: int = 2
    smooth_lambda: float = 0.5
    smooth_iters: int = 5
    icp_iters: int = 50

    @classmethod
    def from_config(cls, config=None, overrides: Optional[Dict[str, Any]] = None) -> "SubstitutionConfig":
        cfg = cls()
        if config is not None:
            cfg.band = config.getint('Substitution', 'band', fallback=cfg.band)
            cfg.smooth_lambda = config.getfloat('Substitution', 'smooth_lambda', fallback=cfg.smooth_lambda)
            cfg.smooth_iters = config.getint('Substitution', 'smooth_iters', fallback=cfg.smooth_iters)
            cfg.icp_iters = config.getint('Texturing', 'icp_iters', fallback=cfg.icp_iters)
        for key, value in (overrides or {}).items():
            if value is not None:
                setattr(cfg, key, value)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.band < 0 or self.smooth_iters < 0:
            raise ValueError("Substitution.band und Substitution.smooth_iters dürfen nicht negativ sein")
        if not 0.0 < self.smooth_lambda <= 1.0:
            raise ValueError(f"Substitution.smooth_lambda muss in (0, 1] liegen, erhalten {self.smooth_lambda}")
        if self.icp_iters < 1:
            raise ValueError(f"ICP-Iterationen müssen >= 1 sein, erhalten {self.icp_iters}")


def resample_donor(donor: Union[Mesh, UvMap], tmpl: SemanticTemplate,
                   rasterizer: Optional[UvRasterizer] = None) -> np.ndarray:
    """
    Spenderpositionen pro Template-Vertex.

    Raises:
        ValueError: Wenn ein Spendernetz eine andere Vertexanzahl hat.
    """
    if isinstance(donor, UvMap):
        positions, flagged = resample_vertices_from_map(donor.channel(0, 3), tmpl, rasterizer)
        if flagged.any():
            logger.warning(f"{int(flagged.sum())} Spender-Vertices ohne abgedeckte UV-Schablone")
        return positions
    if donor.vertex_count != tmpl.vertex_count:
        raise ValueError(f"Spender hat {donor.vertex_count} Vertices, Template {tmpl.vertex_count}")
    return donor.positions.copy()


def _normalizing_transform(points: np.ndarray, normals: np.ndarray) -> SimilarityTransform:
    """Dreht die mittlere Normale auf +z und skaliert die Punkte in den Einheitswürfel."""
    mean_normal = normals.mean(axis=0)
    if np.linalg.norm(mean_normal) < 1e-12:
        rotation = np.eye(3)
    else:
        rotation = Rotation.align_vectors(UP[None], (mean_normal / np.linalg.norm(mean_normal))[None])[0].as_matrix()
    rotated = points @ rotation.T
    lo = rotated.min(axis=0)
    extent = float((rotated.max(axis=0) - lo).max())
    if extent <= 0:
        raise ValueError("Teil ohne räumliche Ausdehnung")
    scale = 1.0 / extent
    return SimilarityTransform(rotation, -scale * lo, scale)


def align_part(donor_part: np.ndarray, base_part: np.ndarray, donor_normals: np.ndarray,
               base_normals: np.ndarray, base_faces: np.ndarray,
               cfg: Optional[IcpConfig] = None) -> SimilarityTransform:
    """
    Ähnlichkeitstransformation vom Spenderteil auf den Basisteil.

    Beide Teile werden normalisiert (mittlere Normale auf +z, Einheitswürfel), im
    normalisierten Raum per ICP mit Skalierung ausgerichtet und die Transformation in
    das Koordinatensystem der Basis zurückgeführt.

    Args:
        donor_part, base_part: (P, 3) Positionen der Teilvertices
        donor_normals, base_normals: (P, 3) Vertexnormalen
        base_faces: Dreiecke des Basisteils mit lokalen Indizes in base_part
        cfg: ICP-Parameter (Skalierung wird immer mitgeschätzt)
    """
    cfg = cfg or IcpConfig(with_scale=True)
    if not cfg.with_scale:
        cfg = IcpConfig(cfg.max_iters, cfg.tol, True)
    if len(base_faces) == 0:
        raise ValueError("Basisteil ohne Dreiecke, Ausrichtung nicht möglich")
    to_donor = _normalizing_transform(donor_part, donor_normals)
    to_base = _normalizing_transform(base_part, base_normals)
    target = Bvh(Mesh(to_base.apply(base_part), base_faces))
    icp = icp_align(to_donor.apply(donor_part), target, cfg, init=SimilarityTransform())
    transform = to_base.inverse().compose(icp.transform.compose(to_donor))
    logger.info(f"Teilausrichtung: Skalierung {transform.scale:.4f}, {icp.iterations} ICP-Iterationen")
    return transform


def part_faces(faces: np.ndarray, part: np.ndarray) -> np.ndarray:
    """Dreiecke, deren Ecken alle im Teil liegen, mit lokalen Indizes."""
    inside = part[faces].all(axis=1)
    local = np.full(len(part), -1, dtype=np.int64)
    local[part] = np.arange(int(part.sum()))
    return local[faces[inside]]


def smooth_seam(mesh: Mesh, part: np.ndarray, band: int, lam: float, iterations: int) -> Mesh:
    """
    Glättet die Vertices innerhalb von band Kantenringen um die Teilgrenze.

    Alle anderen Vertices bleiben fest.
    """
    part = np.asarray(part, dtype=bool)
    if iterations == 0:
        return mesh.copy()
    adjacency = vertex_adjacency(mesh).tocoo()
    crossing = part[adjacency.row] != part[adjacency.col]
    boundary = np.unique(np.concatenate([adjacency.row[crossing], adjacency.col[crossing]]))
    if len(boundary) == 0:
        logger.warning("Teil hat keine Grenze zum restlichen Netz, keine Nahtglättung")
        return mesh.copy()
    rings = dijkstra(vertex_adjacency(mesh), directed=False, indices=boundary, unweighted=True, min_only=True)
    movable = rings <= band
    smoothed, _ = laplacian_smooth(mesh, lam, iterations, fixed=~movable)
    logger.debug(f"Nahtglättung: {int(movable.sum())} Vertices in {band} Ringen")
    return smoothed


def substitute_part(base: Mesh, donor_positions: np.ndarray, tmpl: SemanticTemplate, label: str,
                    cfg: Optional[SubstitutionConfig] = None) -> Tuple[Mesh, SimilarityTransform]:
    """
    Ersetzt die Vertices eines Labels durch ausgerichtete Spenderpositionen.

    Vertexanzahl, Reihenfolge und Flächen bleiben unverändert.

    Raises:
        ValueError: Bei unbekanntem Label, leerem Teil oder abweichender Vertexanzahl.
    """
    cfg = cfg or SubstitutionConfig()
    donor_positions = np.asarray(donor_positions, dtype=np.float64).reshape(-1, 3)
    if len(donor_positions) != base.vertex_count or base.vertex_count != tmpl.vertex_count:
        raise ValueError(f"Vertexanzahl stimmt nicht überein: Basis {base.vertex_count}, "
                         f"Spender {len(donor_positions)}, Template {tmpl.vertex_count}")
    part = tmpl.label_mask([label])
    if not part.any():
        raise ValueError(f"Label '{label}' hat keine Vertices im Template")

    faces = tmpl.mesh.faces
    base_normals, _ = vertex_normals(Mesh(base.positions, faces))
    donor_normals, _ = vertex_normals(Mesh(donor_positions, faces))
    transform = align_part(donor_positions[part], base.positions[part], donor_normals[part],
                           base_normals[part], part_faces(faces, part),
                           IcpConfig(max_iters=cfg.icp_iters, with_scale=True))

    positions = base.positions.copy()
    positions[part] = transform.apply(donor_positions[part])
    result = smooth_seam(Mesh(positions, faces, base.colors), part, cfg.band, cfg.smooth_lambda, cfg.smooth_iters)
    logger.info(f"Teil '{label}' ersetzt: {int(part.sum())} Vertices")
    return Mesh(result.positions, base.faces, base.colors), transform
