"""
Completion Module

Dieses Modul vervollständigt das partielle semantische Netz im UV-Raum: die skalare
Normalenverschiebung wird in den Löchern harmonisch ergänzt (diskrete Laplace-Gleichung
mit Dirichlet-Rand), ausgewählte Körperteile werden durch das Template ersetzt und das
Ergebnis wird auf die volle Template-Konnektivität zurückgetastet.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import distance_transform_edt
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg, splu

from core.mesh import Mesh
from core.raster import UvRasterizer
from core.template import Pose, SemanticTemplate, lbs_pose
from core.uv_map import UvMap
from registration.sns_module import SnsResult
from registration.uv_domain import (apply_displacement, canonical_position_map, dilate_mask,
                                    encode_displacement, normal_map, position_map)

# Logger konfigurieren
logger = logging.getLogger(__name__)

DEFAULT_REPLACE_PARTS = ["face", "left-hand", "right-hand", "left-foot", "right-foot"]

# Sammelnamen für beidseitige Körperteile
PART_GROUPS = {"hands": ["left-hand", "right-hand"], "feet": ["left-foot", "right-foot"]}

# Maximale Abweichung zwischen SNS-Template und neu posiertem Template
POSE_MATCH_ATOL = 1e-9

# Bis zu dieser Anzahl unbekannter Texel wird direkt faktorisiert
DIRECT_SOLVE_LIMIT = 400_000


def expand_parts(parts: List[str]) -> List[str]:
    """Löst Sammelnamen wie "hands" in Einzellabels auf, Reihenfolge bleibt, Dubletten entfallen."""
    expanded: List[str] = []
    for name in parts:
        for label in PART_GROUPS.get(name, [name]):
            if label not in expanded:
                expanded.append(label)
    return expanded


@dataclass
class CompletionConfig:
    """Parameter der Lochfüllung und der Teilersetzung."""
    tolerance: float = 1e-8
    max_iterations: int = 20000
    dilate: int = 2
    replace_parts: List[str] = field(default_factory=lambda: list(DEFAULT_REPLACE_PARTS))
    blend_band: int = 4
    uv_resolution: int = 1024
    seam_links: bool = True

    @classmethod
    def from_config(cls, config=None, overrides: Optional[Dict[str, Any]] = None) -> "CompletionConfig":
        """Kommandozeile > Konfigurationsdatei > Standardwerte."""
        cfg = cls()
        if config is not None:
            cfg.tolerance = config.getfloat('Completion', 'tolerance', fallback=cfg.tolerance)
            cfg.max_iterations = config.getint('Completion', 'max_iterations', fallback=cfg.max_iterations)
            cfg.dilate = config.getint('Completion', 'dilate', fallback=cfg.dilate)
            cfg.replace_parts = config.getlist('Completion', 'replace_parts', fallback=cfg.replace_parts)
            cfg.blend_band = config.getint('Completion', 'blend_band', fallback=cfg.blend_band)
            cfg.seam_links = config.getboolean('Completion', 'seam_links', fallback=cfg.seam_links)
            cfg.uv_resolution = config.getint('Pipeline', 'uv_resolution', fallback=cfg.uv_resolution)
        for key, value in (overrides or {}).items():
            if value is not None:
                setattr(cfg, key, value)
        cfg.replace_parts = expand_parts(cfg.replace_parts)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.tolerance <= 0:
            raise ValueError(f"Completion.tolerance muss positiv sein, erhalten {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError(f"Completion.max_iterations muss >= 1 sein, erhalten {self.max_iterations}")
        if self.dilate < 0 or self.blend_band < 0:
            raise ValueError("Completion.dilate und Completion.blend_band dürfen nicht negativ sein")
        res = int(self.uv_resolution)
        if res < 1 or res > 4096 or res & (res - 1):
            raise ValueError(f"UV-Auflösung muss eine Zweierpotenz bis 4096 sein, erhalten {res}")


@dataclass
class InpaintResult:
    """Gefülltes Feld, nicht erreichbare Lochtexel und Güte der Lösung."""
    field: UvMap
    unreachable: np.ndarray
    residual: float
    solver: str
    iterations: int = 0


@dataclass
class CompletionResult:
    """Vollständiges Netz und die UV-Zwischenergebnisse der Vervollständigung."""
    mesh: Mesh
    displacement: UvMap
    known_displacement: UvMap
    hole_mask: UvMap
    canonical_map: UvMap
    flagged_vertices: np.ndarray
    stats: Dict[str, Any] = field(default_factory=dict)


# ----------------------------------------------------------------------
# Harmonische Lochfüllung
# ----------------------------------------------------------------------

def texel_edges(coverage: np.ndarray, links: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Ungerichtete Nachbarschaftskanten zwischen abgedeckten Texeln.

    Args:
        coverage: (H, W) Abdeckung
        links: Optionale zusätzliche (L, 2) Texelpaare (z. B. über UV-Nähte)

    Returns:
        np.ndarray: (E, 2) lineare Indizes, eindeutig und sortiert
    """
    h, w = coverage.shape
    idx = np.arange(h * w).reshape(h, w)
    right = coverage[:, :-1] & coverage[:, 1:]
    down = coverage[:-1, :] & coverage[1:, :]
    pairs = [np.stack([idx[:, :-1][right], idx[:, 1:][right]], axis=1),
             np.stack([idx[:-1, :][down], idx[1:, :][down]], axis=1)]
    if links is not None and len(links):
        links = np.asarray(links, dtype=np.int64).reshape(-1, 2)
        flat = coverage.reshape(-1)
        keep = flat[links[:, 0]] & flat[links[:, 1]] & (links[:, 0] != links[:, 1])
        pairs.append(links[keep])
    edges = np.concatenate(pairs).astype(np.int64)
    if len(edges) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(np.sort(edges, axis=1), axis=0)


def laplace_system(known: np.ndarray, unknown: np.ndarray, edges: np.ndarray, values: np.ndarray):
    """
    Stellt das Dirichlet-Problem deg(i)·x_i − Σ x_j = Σ f_k über den unbekannten Texeln auf.

    Returns:
        Tuple: (A als csr, rechte Seite (n, C), Grad (n,), Anzahl bekannter Nachbarn (n,),
        Kanten zwischen unbekannten Texeln als lokale Indizes)
    """
    n = int(unknown.sum())
    local = np.full(unknown.shape[0], -1, dtype=np.int64)
    local[unknown] = np.arange(n)
    a, b = edges[:, 0], edges[:, 1]

    degree = np.zeros(n)
    boundary = np.zeros(n)
    rhs = np.zeros((n, values.shape[1]))

    inner = unknown[a] & unknown[b]
    ia, ib = local[a[inner]], local[b[inner]]
    np.add.at(degree, ia, 1.0)
    np.add.at(degree, ib, 1.0)

    for u_end, k_end in ((a, b), (b, a)):
        mixed = unknown[u_end] & known[k_end]
        iu = local[u_end[mixed]]
        np.add.at(degree, iu, 1.0)
        np.add.at(boundary, iu, 1.0)
        np.add.at(rhs, iu, values[k_end[mixed]])

    off = sp.coo_matrix((-np.ones(2 * len(ia)), (np.concatenate([ia, ib]), np.concatenate([ib, ia]))),
                        shape=(n, n))
    matrix = (sp.diags(degree) + off).tocsr()
    return matrix, rhs, degree, boundary, np.stack([ia, ib], axis=1)


def harmonic_inpaint(field: UvMap, hole: UvMap, coverage: Optional[np.ndarray] = None,
                     links: Optional[np.ndarray] = None, tolerance: float = 1e-8,
                     max_iterations: int = 20000) -> InpaintResult:
    """
    Füllt die Lochtexel so, dass jeder dem Mittel seiner abgedeckten Nachbarn entspricht.

    Bekannte Texel (Abdeckung ohne Loch) bleiben bitgenau erhalten. Lochkomponenten ohne
    Verbindung zu bekannten Texeln werden auf 0 gesetzt und markiert.

    Args:
        field: Zu füllende Karte (beliebig viele Kanäle)
        hole: Lochmaske
        coverage: Abdeckung (Standard: Abdeckung der Karte)
        links: Zusätzliche Nachbarschaften über UV-Nähte
        tolerance: Zulässiges Residuum (Abweichung vom Nachbarmittel, ∞-Norm)
        max_iterations: Obergrenze für das iterative Verfahren

    Returns:
        InpaintResult: Gefülltes Feld, unerreichbare Texel, Residuum

    Raises:
        ValueError: Wenn kein bekannter Texel existiert oder die Auflösungen abweichen.
    """
    field.require_same_grid(hole, "Feld und Lochmaske")
    coverage = field.coverage if coverage is None else np.asarray(coverage, dtype=bool)
    hole_mask = hole.mask & coverage
    known_mask = coverage & ~hole_mask
    if not known_mask.any():
        raise ValueError("Harmonische Füllung ohne bekannte Texel nicht möglich")

    h, w = field.shape
    channels = field.channels
    data = field.data.copy()
    unreachable = np.zeros((h, w), dtype=bool)
    if not hole_mask.any():
        return InpaintResult(UvMap(data, coverage), unreachable, 0.0, "none")

    values = data.reshape(-1, channels).astype(np.float64)
    unknown = hole_mask.reshape(-1)
    known = known_mask.reshape(-1)
    edges = texel_edges(coverage, links)
    matrix, rhs, degree, boundary, inner_edges = laplace_system(known, unknown, edges, values)
    n = matrix.shape[0]

    # Komponenten ohne Dirichlet-Rand sind nicht lösbar
    graph = sp.coo_matrix((np.ones(len(inner_edges)), (inner_edges[:, 0], inner_edges[:, 1])), shape=(n, n))
    n_comp, labels = connected_components(graph, directed=False)
    anchored = np.zeros(n_comp, dtype=bool)
    anchored[labels[boundary > 0]] = True
    solvable = anchored[labels]

    flat_unknown = np.flatnonzero(unknown)
    if (~solvable).any():
        unreachable.reshape(-1)[flat_unknown[~solvable]] = True
        logger.warning(f"{int((~solvable).sum())} Lochtexel ohne Verbindung zu bekannten Texeln (auf 0 gesetzt)")

    solution = np.zeros((n, channels))
    iterations = 0
    solver = "direct"
    if solvable.any():
        sel = np.flatnonzero(solvable)
        sub = matrix[sel][:, sel].tocsc()
        sub_rhs = rhs[sel]
        if len(sel) <= DIRECT_SOLVE_LIMIT:
            lu = splu(sub)
            solution[sel] = lu.solve(sub_rhs)
        else:
            solver = "cg"
            preconditioner = sp.diags(1.0 / degree[sel])
            for c in range(channels):
                counter = {"k": 0}

                def count(_):
                    counter["k"] += 1

                x, info = cg(sub, sub_rhs[:, c], rtol=tolerance * 1e-2, atol=0.0, maxiter=max_iterations,
                             M=preconditioner, callback=count)
                if info > 0:
                    logger.warning(f"CG nach {info} Iterationen nicht konvergiert (Kanal {c})")
                solution[sel, c] = x
                iterations = max(iterations, counter["k"])

        residual_vec = (sub @ solution[sel] - sub_rhs) / degree[sel][:, None]
        residual = float(np.abs(residual_vec).max()) if residual_vec.size else 0.0
    else:
        residual = 0.0

    values[flat_unknown] = solution
    filled = values.reshape(h, w, channels)
    if residual > tolerance:
        logger.warning(f"Residuum der harmonischen Füllung {residual:.3g} über Toleranz {tolerance:.3g}")
    logger.info(f"Harmonische Füllung: {n} Lochtexel, {len(edges)} Kanten, Löser {solver}, "
                f"Residuum {residual:.3g}")
    result = np.where(hole_mask[:, :, None], filled.astype(np.float32), data)
    return InpaintResult(UvMap(result, coverage), unreachable, residual, solver, iterations)


# ----------------------------------------------------------------------
# Vervollständigung
# ----------------------------------------------------------------------

def replacement_weight(tmpl: SemanticTemplate, raster: UvRasterizer, parts: List[str], band: int) -> np.ndarray:
    """
    Gewicht pro Texel, mit dem die Verschiebung beibehalten wird.

    0 in den zu ersetzenden Teilen, linear auf 1 ansteigend über band Texel.
    """
    weight = np.ones(raster.resolution)
    names = [p for p in parts if p in tmpl.label_names]
    unknown = sorted(set(parts) - set(names))
    if unknown:
        logger.warning(f"Labels nicht im Template, werden übersprungen: {', '.join(unknown)}")
    if not names:
        return weight
    vertex_in_part = tmpl.label_mask(names)
    face_in_part = vertex_in_part[tmpl.mesh.faces].any(axis=1)
    part = raster.texels_of_faces(face_in_part)
    if not part.any():
        return weight
    if band <= 0:
        weight[part] = 0.0
        return weight
    distance = distance_transform_edt(~part)
    return np.clip(distance / float(band), 0.0, 1.0)


def complete_mesh(sns: SnsResult, tmpl: SemanticTemplate, pose: Pose, cfg: CompletionConfig,
                  rasterizer: Optional[UvRasterizer] = None) -> CompletionResult:
    """
    Vervollständigt ein partielles Netz über die Verschiebung entlang der Template-Normalen.

    Ablauf: Positions-/Normalenkarten rastern, Verschiebung kodieren, Lochmaske um
    ungültige Dreiecke erweitern und dilatieren, harmonisch füllen, Teile ersetzen,
    Verschiebung anwenden und auf die Vertices zurücktasten. Vertices, deren
    Abtastschablone vollständig außerhalb des Lochs liegt, behalten ihre gesampelte Position.

    Args:
        sns: Ergebnis der SNS-Registrierung
        tmpl: Semantisches Template
        pose: Pose, mit der sns erzeugt wurde; daraus entsteht die Basis S_pose
        cfg: Parameter der Vervollständigung
        rasterizer: Optional wiederverwendeter UV-Rasterizer

    Returns:
        CompletionResult: Netz mit voller Template-Konnektivität und Zwischenkarten

    Raises:
        ValueError: Bei abweichender Vertexanzahl, Maskengröße oder wenn sns nicht in pose vorliegt.
    """
    start_time = time.time()
    if sns.sampled.vertex_count != tmpl.vertex_count:
        raise ValueError(f"Partielles Netz hat {sns.sampled.vertex_count} Vertices, "
                         f"Template {tmpl.vertex_count}")
    raster = rasterizer if rasterizer is not None else UvRasterizer.for_template(tmpl, cfg.uv_resolution)
    if sns.hole_mask.shape != raster.resolution:
        raise ValueError(f"Lochmaske {sns.hole_mask.shape} passt nicht zur UV-Auflösung {raster.resolution}")

    posed = lbs_pose(tmpl, tmpl.mesh.positions, pose)
    mismatch = float(np.abs(posed - np.asarray(sns.posed_template, dtype=np.float64)).max(initial=0.0))
    if mismatch > POSE_MATCH_ATOL:
        raise ValueError(f"SNS-Ergebnis liegt nicht in der übergebenen Pose (Abweichung {mismatch:.3g} m)")
    s_pose = position_map(tmpl, posed, rasterizer=raster)
    n_pose = normal_map(tmpl, posed, rasterizer=raster)
    s_sample = position_map(tmpl, sns.sampled.positions, rasterizer=raster)
    d_known, zero_normal = encode_displacement(s_sample, s_pose, n_pose)

    invalid_faces = ~sns.valid_vertex[tmpl.mesh.faces].all(axis=1)
    hole0 = sns.hole_mask.mask | raster.texels_of_faces(invalid_faces) | zero_normal
    hole = dilate_mask(UvMap.from_mask(hole0, raster.coverage), cfg.dilate)

    links = raster.seam_links() if cfg.seam_links else None
    inpaint = harmonic_inpaint(d_known, hole, raster.coverage, links, cfg.tolerance, cfg.max_iterations)

    weight = replacement_weight(tmpl, raster, cfg.replace_parts, cfg.blend_band)
    d = inpaint.field.data[:, :, 0].astype(np.float64) * weight
    displacement = UvMap(d[:, :, None], raster.coverage)

    s_full, _ = apply_displacement(s_pose, n_pose, displacement)
    positions, flagged = raster.resample_vertices(s_full)

    # Vertices im bekannten Bereich exakt übernehmen
    untouched = np.where(hole.mask | (weight < 1.0), 1.0, 0.0)
    touched, _ = raster.resample_vertices(UvMap(untouched[:, :, None], raster.coverage))
    exact = sns.valid_vertex & (touched[:, 0] == 0.0)
    positions[exact] = sns.sampled.positions[exact]
    flagged = flagged & ~exact
    if flagged.any():
        positions[flagged] = posed[flagged]
        logger.warning(f"{int(flagged.sum())} Vertices ohne abgedeckte UV-Schablone (Template-Position)")

    canonical = lbs_pose(tmpl, tmpl.mesh.positions, tmpl.canonical_pose)
    s_cano = position_map(tmpl, canonical, rasterizer=raster)
    n_cano = normal_map(tmpl, canonical, rasterizer=raster)
    s_bar = canonical_position_map(s_cano, n_cano, displacement)

    stats = {
        "hole_texels": int(hole.mask.sum()),
        "unreachable_texels": int(inpaint.unreachable.sum()),
        "solver": inpaint.solver,
        "solver_residual": inpaint.residual,
        "exact_vertices": int(exact.sum()),
        "replaced_texels": int((weight < 1.0).sum()),
        "wall_time_s": time.time() - start_time,
    }
    logger.info(f"Vervollständigung: {stats['hole_texels']} Lochtexel gefüllt, "
                f"{stats['exact_vertices']}/{tmpl.vertex_count} Vertices exakt übernommen")
    return CompletionResult(Mesh(positions, tmpl.mesh.faces), displacement, d_known, hole, s_bar, flagged, stats)


def masked_uv_error(s_p: UvMap, s_ref: UvMap, h_outer: UvMap, h_inner: UvMap) -> float:
    """
    Mittlerer quadratischer 3D-Fehler über dem Ring H_outer − H_inner.

    Raises:
        ValueError: Bei leerem Ring, H_inner ⊄ H_outer oder abweichenden Auflösungen.
    """
    for other in (s_ref, h_outer, h_inner):
        s_p.require_same_grid(other)
    outer = h_outer.data[:, :, 0].astype(np.float64)
    inner = h_inner.data[:, :, 0].astype(np.float64)
    if np.any(inner > outer):
        raise ValueError("Innere Maske muss in der äußeren Maske enthalten sein")
    annulus = outer - inner
    total = annulus.sum()
    if total <= 0:
        raise ValueError("Leerer Maskenring, Fehler nicht definiert")
    diff = s_p.data.astype(np.float64) - s_ref.data.astype(np.float64)
    squared = (diff ** 2).sum(axis=2)
    return float((squared * annulus ** 2).sum() / total)
