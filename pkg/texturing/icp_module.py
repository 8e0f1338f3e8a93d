"""
ICP Module

Dieses Modul enthält die Ähnlichkeitstransformation (Rotation, Translation, optional
Skalierung), die gewichtete Procrustes-Lösung über SVD und den ICP-Algorithmus mit
Korrespondenzen zum nächsten Oberflächenpunkt und einem zusätzlichen
Punkt-zu-Ebene-Schritt pro Iteration.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.spatial.transform import Rotation

from core.bvh import Bvh
from core.mesh import face_normals

# Logger konfigurieren
logger = logging.getLogger(__name__)

# Relativer Schwellwert für den zweitgrößten Singulärwert (Kollinearität)
COLLINEAR_EPS = 1e-9


@dataclass
class IcpConfig:
    """Abbruchkriterien und Freiheitsgrade des ICP."""
    max_iters: int = 50
    tol: float = 1e-6
    with_scale: bool = False

    @classmethod
    def from_config(cls, config=None, overrides: Optional[Dict[str, Any]] = None) -> "IcpConfig":
        cfg = cls()
        if config is not None:
            cfg.max_iters = config.getint('Texturing', 'icp_iters', fallback=cfg.max_iters)
            cfg.tol = config.getfloat('Texturing', 'icp_tol', fallback=cfg.tol)
            cfg.with_scale = config.getboolean('Texturing', 'icp_scale', fallback=cfg.with_scale)
        for key, value in (overrides or {}).items():
            if value is not None:
                setattr(cfg, key, value)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.max_iters < 1:
            raise ValueError(f"ICP max_iters muss >= 1 sein, erhalten {self.max_iters}")
        if self.tol <= 0:
            raise ValueError(f"ICP tol muss positiv sein, erhalten {self.tol}")


@dataclass
class SimilarityTransform:
    """x' = scale · R x + t"""
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def apply(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return self.scale * points @ self.rotation.T + self.translation

    def apply_vectors(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=np.float64).reshape(-1, 3) @ self.rotation.T

    def compose(self, inner: "SimilarityTransform") -> "SimilarityTransform":
        """Transformation self ∘ inner (erst inner, dann self)."""
        return SimilarityTransform(self.rotation @ inner.rotation,
                                   self.scale * self.rotation @ inner.translation + self.translation,
                                   self.scale * inner.scale)

    def inverse(self) -> "SimilarityTransform":
        r_inv = self.rotation.T
        return SimilarityTransform(r_inv, -(r_inv @ self.translation) / self.scale, 1.0 / self.scale)

    def to_matrix(self) -> np.ndarray:
        matrix = np.eye(4)
        matrix[:3, :3] = self.scale * self.rotation
        matrix[:3, 3] = self.translation
        return matrix

    def to_dict(self) -> Dict[str, Any]:
        return {"rotation": [float(x) for x in self.rotation.reshape(-1)],
                "translation": [float(x) for x in self.translation],
                "scale": float(self.scale)}


@dataclass
class IcpResult:
    transform: SimilarityTransform
    iterations: int
    errors: List[float]
    converged: bool


def check_non_collinear(points: np.ndarray) -> None:
    """
    Raises:
        ValueError: Bei weniger als 3 Punkten oder kollinearer Punktmenge.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) < 3:
        raise ValueError(f"ICP benötigt mindestens 3 Punkte, erhalten {len(points)}")
    centered = points - points.mean(axis=0)
    singular = np.linalg.svd(centered, compute_uv=False)
    if singular[0] == 0 or singular[1] <= COLLINEAR_EPS * singular[0]:
        raise ValueError("Degenerierte (kollineare) Quellpunktmenge für ICP")


def procrustes(source, target, weights=None, with_scale: bool = False) -> SimilarityTransform:
    """
    Gewichtete Procrustes-Lösung (Umeyama): minimiert Σ w‖s·R·x + t − y‖².

    Args:
        source: (N, 3) Quellpunkte
        target: (N, 3) Zielpunkte
        weights: Optionale (N,) nichtnegative Gewichte
        with_scale: Einheitliche Skalierung mitschätzen

    Returns:
        SimilarityTransform: Optimale Transformation ohne Spiegelung
    """
    source = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    target = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    w = np.ones(len(source)) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    total = w.sum()
    if total <= 0:
        raise ValueError("Procrustes-Gewichte summieren zu 0")
    mu_s = (w[:, None] * source).sum(axis=0) / total
    mu_t = (w[:, None] * target).sum(axis=0) / total
    xs = source - mu_s
    xt = target - mu_t
    covariance = (w[:, None] * xt).T @ xs / total
    u, singular, vt = np.linalg.svd(covariance)
    d = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[2] = -1.0
    rotation = u @ np.diag(d) @ vt
    scale = 1.0
    if with_scale:
        variance = (w * (xs ** 2).sum(axis=1)).sum() / total
        if variance <= 0:
            raise ValueError("Quellpunkte ohne Ausdehnung, Skalierung nicht bestimmbar")
        scale = float((singular * d).sum() / variance)
    translation = mu_t - scale * rotation @ mu_s
    return SimilarityTransform(rotation, translation, scale)


def _mean_distance(distance: np.ndarray, weights: Optional[np.ndarray]) -> float:
    if weights is None:
        return float(distance.mean())
    return float((weights * distance).sum() / weights.sum())


def point_to_plane_step(source: np.ndarray, transform: SimilarityTransform, targets: np.ndarray,
                        normals: np.ndarray, weights: Optional[np.ndarray] = None,
                        with_scale: bool = False) -> Optional[SimilarityTransform]:
    """
    Ein linearisierter Punkt-zu-Ebene-Schritt um die aktuelle Transformation.

    Minimiert Σ w (n·(q − y))² über kleine Rotation ω, Verschiebung δt und optional
    Skalierung δs um den Schwerpunkt der bewegten Punkte.

    Returns:
        Optional[SimilarityTransform]: Neue Gesamttransformation oder None, wenn der
        Schritt die Skalierung nicht positiv lässt
    """
    moved = transform.apply(source)
    center = moved.mean(axis=0)
    arm = moved - center
    residual = np.einsum('ij,ij->i', normals, moved - targets)
    columns = [np.cross(arm, normals), normals]
    if with_scale:
        columns.append(np.einsum('ij,ij->i', normals, arm)[:, None])
    system = np.hstack(columns)
    if weights is not None:
        root = np.sqrt(weights)
        system = system * root[:, None]
        residual = residual * root
    solution = np.linalg.lstsq(system, -residual, rcond=None)[0]
    growth = 1.0 + solution[6] if with_scale else 1.0
    if growth <= 0:
        return None
    rotation = Rotation.from_rotvec(solution[:3]).as_matrix()
    step = SimilarityTransform(rotation, center + solution[3:6] - growth * rotation @ center, float(growth))
    return step.compose(transform)


def icp_align(source, target: Bvh, cfg: IcpConfig, init: Optional[SimilarityTransform] = None,
              weights=None) -> IcpResult:
    """
    Richtet eine Punktmenge starr (optional mit Skalierung) an einer Zielfläche aus.

    Ohne Startwert werden die Schwerpunkte von Quelle und Zielvertices zur Deckung
    gebracht. Pro Iteration werden die nächsten Oberflächenpunkte gesucht und zwei
    Kandidaten bewertet: Procrustes von der ursprünglichen Quelle auf diese
    Korrespondenzen und ein Punkt-zu-Ebene-Schritt mit den Flächennormalen. Übernommen
    wird der Kandidat mit dem kleinsten mittleren Oberflächenabstand, aber nur wenn er
    den bisherigen Abstand unterschreitet; die Fehlerfolge fällt daher monoton.
    Abbruch, wenn die Verbesserung kleiner als tol ist.

    Raises:
        ValueError: Bei kollinearer Quelle.
    """
    source = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    check_non_collinear(source)
    w = None if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    normals, _ = face_normals(target.mesh)
    if init is None:
        init = SimilarityTransform(translation=target.mesh.positions.mean(axis=0) - source.mean(axis=0))
    transform = init
    closest = target.closest_point(transform.apply(source))
    errors = [_mean_distance(closest.distance, w)]
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        candidates = [procrustes(source, closest.points, w, cfg.with_scale),
                      point_to_plane_step(source, transform, closest.points, normals[closest.face],
                                          w, cfg.with_scale)]
        best, best_closest, best_error = None, None, errors[-1]
        for candidate in candidates:
            if candidate is None:
                continue
            candidate_closest = target.closest_point(candidate.apply(source))
            error = _mean_distance(candidate_closest.distance, w)
            if error < best_error:
                best, best_closest, best_error = candidate, candidate_closest, error
        improvement = errors[-1] - best_error
        if best is not None:
            transform, closest = best, best_closest
        errors.append(best_error)
        if improvement < cfg.tol:
            converged = True
            break
    logger.info(f"ICP: {iterations} Iterationen, mittlerer Abstand {errors[0]:.4g} -> {errors[-1]:.4g} m")
    return IcpResult(transform, iterations, errors, converged)
