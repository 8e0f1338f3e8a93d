"""
SNS Module

Dieses Modul implementiert das semantik- und normalenbasierte Sampling: jeder Vertex
des posierten Templates wird entlang seiner Normalen auf die Zielfläche (Netz oder
Distanzfeld) projiziert. Dreiecke schlechter Qualität werden in posierter und in
kanonischer Pose verworfen, zu kleine Zusammenhangskomponenten entfernt und für die
verbleibenden Lücken eine Lochmaske im UV-Raum erzeugt.

Winkelschwelle theta ist in Radiant angegeben.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from core.bvh import Bvh
from core.mesh import Mesh, connected_components, edge_lengths, face_areas, face_normals
from core.raster import UvRasterizer
from core.sdf import SdfField, march_rays
from core.template import Pose, SemanticTemplate, lbs_pose, lbs_repose, template_normals
from core.uv_map import UvMap
from core.utils import run_chunked

# Logger konfigurieren
logger = logging.getLogger(__name__)


@dataclass
class SnsConfig:
    """Parameter des Samplings und der Dreiecksauslese."""
    range: Optional[float] = None
    range_fraction: float = 0.05
    theta: float = 2.0
    area_ratio: float = 3.0
    edge_ratio: float = 3.0
    min_component: float = 500
    sdf_step: Optional[float] = None
    uv_resolution: int = 1024
    workers: int = 1
    chunk_size: int = 4096
    progress: bool = False

    # Zuordnung Konfigurationsoption -> Feld
    OPTIONS = {
        'range': ('range', float), 'range_fraction': ('range_fraction', float),
        'theta': ('theta', float), 'area_ratio': ('area_ratio', float),
        'edge_ratio': ('edge_ratio', float), 'min_component': ('min_component', float),
        'sdf_step': ('sdf_step', float), 'chunk_size': ('chunk_size', int),
    }

    @classmethod
    def from_config(cls, config=None, overrides: Optional[Dict[str, Any]] = None) -> "SnsConfig":
        """
        Baut die Konfiguration mit der Priorität Kommandozeile > Konfigurationsdatei > Standard.

        Args:
            config: ConfigManager oder None
            overrides: Werte von der Kommandozeile (None-Werte werden ignoriert)
        """
        cfg = cls()
        if config is not None:
            for option, (attr, kind) in cls.OPTIONS.items():
                if config.has_option('SNS', option):
                    setattr(cfg, attr, kind(config.getfloat('SNS', option)))
            cfg.uv_resolution = config.getint('Pipeline', 'uv_resolution', fallback=cfg.uv_resolution)
            cfg.workers = config.getint('Advanced', 'workers', fallback=cfg.workers)
            cfg.progress = config.getboolean('Output', 'progress', fallback=cfg.progress)
        for key, value in (overrides or {}).items():
            if value is not None:
                setattr(cfg, key, value)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        """
        Raises:
            ValueError: Bei nicht-positiven Schwellen oder ungültiger Auflösung.
        """
        for name in ('theta', 'area_ratio', 'edge_ratio', 'range_fraction'):
            if getattr(self, name) <= 0:
                raise ValueError(f"SNS.{name} muss positiv sein, erhalten {getattr(self, name)}")
        if self.min_component < 0:
            raise ValueError(f"SNS.min_component darf nicht negativ sein, erhalten {self.min_component}")
        if self.range is not None and self.range <= 0:
            raise ValueError(f"SNS.range muss positiv sein, erhalten {self.range}")
        if self.sdf_step is not None and self.sdf_step <= 0:
            raise ValueError(f"SNS.sdf_step muss positiv sein, erhalten {self.sdf_step}")
        res = int(self.uv_resolution)
        if res < 1 or res > 4096 or res & (res - 1):
            raise ValueError(f"UV-Auflösung muss eine Zweierpotenz bis 4096 sein, erhalten {res}")

    def resolve_range(self, target: Union[Bvh, SdfField]) -> float:
        """Reichweite r; ohne expliziten Wert range_fraction × Diagonale der Zielbox."""
        if self.range is not None:
            return float(self.range)
        diagonal = target.diagonal if isinstance(target, Bvh) else target.bbox_diagonal()
        return self.range_fraction * diagonal


@dataclass
class SampleResult:
    """Sampling-Ergebnis pro Vertex."""
    points: np.ndarray
    valid: np.ndarray
    t: np.ndarray
    outward: np.ndarray


@dataclass
class CullResult:
    """Ergebnis der Dreiecksauslese."""
    culled_faces: np.ndarray
    invalid_vertices: np.ndarray
    by_angle: int = 0
    by_area: int = 0
    by_edge: int = 0
    degenerate_reference: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


@dataclass
class SnsResult:
    """Partielles semantisches Netz mit Gültigkeit pro Vertex und Lochmaske."""
    sampled: Mesh
    valid_vertex: np.ndarray
    hole_mask: UvMap
    posed_template: np.ndarray
    range: float
    stats: Dict[str, Any] = field(default_factory=dict)


# ----------------------------------------------------------------------
# Sampling
# ----------------------------------------------------------------------

def sample_explicit(positions, normals, target: Bvh, cfg: SnsConfig, max_range: Optional[float] = None) -> SampleResult:
    """
    Schneidet Normalenstrahlen mit einem Zielnetz.

    Liegt ein Vertex innerhalb des Ziels, wird entlang +n gesucht, sonst entlang −n;
    gültig ist der nächste Treffer mit t in [0, r].

    Returns:
        SampleResult: Treffer pro Vertex; Fehlschüsse sind ungültig
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    r = cfg.resolve_range(target) if max_range is None else max_range
    outward = target.is_inside(positions)
    directions = np.where(outward[:, None], normals, -normals)

    # Der BVH verteilt die Blöcke selbst auf seine Worker
    hits = target.raycast_batch(positions, directions, 0.0, r)
    valid = hits.hit & (np.linalg.norm(normals, axis=1) > 0)
    t = hits.t
    points = hits.points
    t = np.where(valid, t, np.nan)
    logger.info(f"Explizites Sampling: {int(valid.sum())}/{len(positions)} Vertices gültig (r = {r:.4g} m)")
    return SampleResult(points, valid, t, outward)


def sample_implicit(positions, normals, sdf: SdfField, cfg: SnsConfig, max_range: Optional[float] = None) -> SampleResult:
    """
    Ray Marching mit konstanter Schrittweite auf einem Distanzfeld.

    Die Richtung folgt derselben Regel wie beim expliziten Sampling (sdf < 0: +n).
    Ein Vorzeichenwechsel wird mit 20 Bisektionsschritten verfeinert; ohne
    Vorzeichenwechsel bis r ist der Vertex ungültig.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    r = cfg.resolve_range(sdf) if max_range is None else max_range
    step = cfg.sdf_step if cfg.sdf_step is not None else r / 256.0
    outward = sdf.query(positions) < 0
    directions = np.where(outward[:, None], normals, -normals)

    def march(o, d):
        result = march_rays(sdf, o, d, r, step)
        return result.valid, result.t, result.points

    parts = run_chunked(march, len(positions), cfg.chunk_size, cfg.workers, positions, directions,
                        progress=cfg.progress, desc="SNS Ray Marching")
    valid = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, dtype=bool)
    t = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0)
    points = np.concatenate([p[2] for p in parts]) if parts else np.zeros((0, 3))
    valid &= np.linalg.norm(normals, axis=1) > 0
    logger.info(f"Implizites Sampling: {int(valid.sum())}/{len(positions)} Vertices gültig "
                f"(r = {r:.4g} m, Schritt = {step:.4g} m)")
    return SampleResult(points, valid, t, outward)


# ----------------------------------------------------------------------
# Auslese
# ----------------------------------------------------------------------

def cull_faces(sampled: Mesh, reference: Mesh, cfg: SnsConfig) -> CullResult:
    """
    Verwirft Dreiecke anhand von Normalenwinkel, Flächenverhältnis und Kantenverhältnis.

    Ein Dreieck wird verworfen, wenn der Winkel zwischen gesampelter und Referenznormale
    > theta ist, das Flächenverhältnis > area_ratio oder längste/kürzeste Kante
    > edge_ratio. Alle drei Vertices verworfener Dreiecke werden ungültig.

    Raises:
        ValueError: Wenn die Flächenlisten nicht übereinstimmen.
    """
    if sampled.face_count != reference.face_count or not np.array_equal(sampled.faces, reference.faces):
        raise ValueError("cull_faces erwartet identische Flächenlisten")
    n_faces = sampled.face_count
    invalid = np.zeros(sampled.vertex_count, dtype=bool)
    if n_faces == 0:
        return CullResult(np.zeros(0, dtype=bool), invalid)

    n_s, degenerate_s = face_normals(sampled)
    n_r, degenerate_r = face_normals(reference)
    cos = np.clip((n_s * n_r).sum(axis=1), -1.0, 1.0)
    angle = np.arccos(cos)
    by_angle = (angle > cfg.theta) | degenerate_s

    area_s = face_areas(sampled)
    area_r = face_areas(reference)
    with np.errstate(divide='ignore', invalid='ignore'):
        area_ratio = np.where(degenerate_r, np.inf, area_s / np.where(degenerate_r, 1.0, area_r))
        lengths = edge_lengths(sampled)
        shortest = lengths.min(axis=1)
        edge_ratio = np.where(shortest > 0, lengths.max(axis=1) / np.where(shortest > 0, shortest, 1.0), np.inf)
    by_area = area_ratio > cfg.area_ratio
    by_edge = edge_ratio > cfg.edge_ratio

    culled = by_angle | by_area | by_edge | degenerate_r
    if degenerate_r.any():
        logger.warning(f"{int(degenerate_r.sum())} Referenzdreiecke ohne Fläche verworfen")
    invalid[sampled.faces[culled].reshape(-1)] = True
    return CullResult(culled, invalid, int(by_angle.sum()), int(by_area.sum()), int(by_edge.sum()), degenerate_r)


def _alive_faces(faces: np.ndarray, valid: np.ndarray) -> np.ndarray:
    return valid[faces].all(axis=1)


def _cull_pass(label: str, faces: np.ndarray, valid: np.ndarray, sampled_pos: np.ndarray,
               reference_pos: np.ndarray, cfg: SnsConfig, stats: Dict[str, Any]) -> np.ndarray:
    alive = _alive_faces(faces, valid)
    sub_faces = faces[alive]
    result = cull_faces(Mesh(sampled_pos, sub_faces), Mesh(reference_pos, sub_faces), cfg)
    valid = valid & ~result.invalid_vertices
    stats[f"{label}_culled_faces"] = int(result.culled_faces.sum())
    stats[f"{label}_culled_by_angle"] = result.by_angle
    stats[f"{label}_culled_by_area"] = result.by_area
    stats[f"{label}_culled_by_edge"] = result.by_edge
    logger.info(f"Auslese ({label}): {int(result.culled_faces.sum())} Dreiecke verworfen "
                f"(Winkel {result.by_angle}, Fläche {result.by_area}, Kanten {result.by_edge})")
    return valid


def sns_register(tmpl: SemanticTemplate, posed_pose: Pose, target: Union[Bvh, SdfField], cfg: SnsConfig,
                 rasterizer: Optional[UvRasterizer] = None) -> SnsResult:
    """
    Registriert das Template auf ein Ziel.

    Ablauf: Sampling, Auslese in der Pose, Umposieren von Sample und Template in die
    kanonische Pose und erneute Auslese, Entfernen von Komponenten mit weniger als
    min_component Dreiecken, Aufbau der Lochmaske. Die zurückgegebenen Positionen
    liegen in der Eingabepose; ungültige Vertices behalten ihre posierte Template-Position.

    Args:
        tmpl: Semantisches Template
        posed_pose: Pose, in der das Ziel vorliegt
        target: BVH eines Zielnetzes oder Distanzfeld
        cfg: SNS-Parameter
        rasterizer: Optional wiederverwendeter UV-Rasterizer

    Returns:
        SnsResult: Partielles Netz, Gültigkeit, Lochmaske
    """
    start_time = time.time()
    stats: Dict[str, Any] = {}
    posed = lbs_pose(tmpl, tmpl.mesh.positions, posed_pose)
    normals, normal_flags = template_normals(tmpl, posed)
    r = cfg.resolve_range(target)

    if isinstance(target, Bvh):
        sample = sample_explicit(posed, normals, target, cfg, r)
    elif isinstance(target, SdfField):
        sample = sample_implicit(posed, normals, target, cfg, r)
    else:
        raise ValueError(f"Nicht unterstützter Zieltyp: {type(target).__name__}")
    valid = sample.valid & ~normal_flags
    points = np.where(valid[:, None], sample.points, posed)
    stats["vertices"] = tmpl.vertex_count
    stats["sampled_valid"] = int(valid.sum())

    faces = tmpl.mesh.faces
    valid = _cull_pass("posed", faces, valid, points, posed, cfg, stats)

    canonical = tmpl.canonical_pose
    points_cano, flag_s = lbs_repose(tmpl, points, posed_pose, canonical)
    posed_cano, flag_t = lbs_repose(tmpl, posed, posed_pose, canonical)
    valid &= ~(flag_s | flag_t)
    valid = _cull_pass("canonical", faces, valid, points_cano, posed_cano, cfg, stats)

    alive = _alive_faces(faces, valid)
    removed_components = 0
    if alive.any():
        component_ids, counts = connected_components(Mesh(points, faces[alive]))
        small = counts < cfg.min_component
        removed_components = int(small.sum())
        keep_sub = ~small[component_ids]
        alive_idx = np.flatnonzero(alive)
        alive[alive_idx[~keep_sub]] = False
    stats["components_removed"] = removed_components
    referenced = np.zeros(tmpl.vertex_count, dtype=bool)
    referenced[faces[alive].reshape(-1)] = True
    valid &= referenced

    raster = rasterizer if rasterizer is not None else UvRasterizer.for_template(tmpl, cfg.uv_resolution)
    hole = raster.coverage & ~raster.texels_of_faces(alive)
    hole_mask = UvMap.from_mask(hole, raster.coverage)

    points = np.where(valid[:, None], points, posed)
    sampled = Mesh(points, faces[alive])
    stats["faces_kept"] = int(alive.sum())
    stats["valid_vertices"] = int(valid.sum())
    stats["hole_texels"] = int(hole.sum())
    stats["wall_time_s"] = time.time() - start_time
    logger.info(f"SNS abgeschlossen: {stats['valid_vertices']}/{tmpl.vertex_count} Vertices gültig, "
                f"{stats['faces_kept']}/{len(faces)} Dreiecke, {removed_components} Komponenten entfernt, "
                f"{stats['hole_texels']} Lochtexel")
    return SnsResult(sampled, valid, hole_mask, posed, r, stats)


def partial_validity(partial: Mesh) -> np.ndarray:
    """Gültigkeit pro Vertex eines gespeicherten partiellen Netzes (von einer Fläche referenziert)."""
    valid = np.zeros(partial.vertex_count, dtype=bool)
    if partial.face_count:
        valid[partial.faces.reshape(-1)] = True
    return valid
