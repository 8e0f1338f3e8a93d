"""
SDF Module

Dieses Modul stellt vorzeichenbehaftete Distanzfelder als implizite Zielflächen
bereit (negativ innen) sowie das Ray Marching mit konstanter Schrittweite, mit dem
Vertices eines Templates auf die Nullisofläche projiziert werden.

Dateiformat für dichte Gitter (Little Endian):
    4 Bytes Magic "SDF1", 3 × int32 Dimensionen (nx, ny, nz),
    3 × float64 Ursprung, 3 × float64 Gitterabstand, danach nx·ny·nz float32
    in C-Reihenfolge (Index [i, j, k] liegt bei ursprung + (i, j, k)·abstand).
"""

import os
import logging
import struct
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import map_coordinates

from core.mesh import Mesh

# Logger konfigurieren
logger = logging.getLogger(__name__)

SDF_MAGIC = b"SDF1"


class SdfField:
    """Basisklasse für Distanzfelder: Abfrage liefert den vorzeichenbehafteten Abstand in Metern."""

    def query(self, points) -> np.ndarray:
        raise NotImplementedError

    @property
    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def bbox_diagonal(self) -> float:
        lo, hi = self.bbox
        return float(np.linalg.norm(hi - lo))

    def __call__(self, points) -> np.ndarray:
        return self.query(points)


class SphereSdf(SdfField):
    """Analytisches Distanzfeld einer Kugel."""

    def __init__(self, radius: float, center=(0.0, 0.0, 0.0)):
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=np.float64)

    def query(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.linalg.norm(points - self.center, axis=1) - self.radius

    @property
    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.center - self.radius, self.center + self.radius


class PlaneSdf(SdfField):
    """Halbraum n·p − offset (negativ auf der Seite entgegen der Normalen)."""

    def __init__(self, normal, offset: float, extent: float = 10.0):
        n = np.asarray(normal, dtype=np.float64)
        self.normal = n / np.linalg.norm(n)
        self.offset = float(offset)
        self.extent = float(extent)

    def query(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return points @ self.normal - self.offset

    @property
    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.full(3, -self.extent), np.full(3, self.extent)


class GridSdf(SdfField):
    """Dichtes Gitter mit trilinearer Interpolation; außerhalb wird auf den Rand geklemmt."""

    def __init__(self, values, origin, spacing):
        self.values = np.ascontiguousarray(np.asarray(values, dtype=np.float32))
        if self.values.ndim != 3 or min(self.values.shape) < 2:
            raise ValueError(f"SDF-Gitter braucht mindestens 2 Samples pro Achse, erhalten {self.values.shape}")
        self.origin = np.asarray(origin, dtype=np.float64).reshape(3)
        self.spacing = np.broadcast_to(np.asarray(spacing, dtype=np.float64), (3,)).copy()
        if np.any(self.spacing <= 0):
            raise ValueError("Gitterabstand muss positiv sein")
        self._samples = self.values.astype(np.float64)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(d) for d in self.values.shape)

    @property
    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.origin.copy(), self.origin + (np.array(self.dims) - 1) * self.spacing

    def query(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        coords = ((points - self.origin) / self.spacing).T
        return map_coordinates(self._samples, coords, order=1, mode='nearest')

    def save(self, file_path: str) -> None:
        """Schreibt das Gitter im SDF1-Binärformat."""
        directory = os.path.dirname(file_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        nx, ny, nz = self.dims
        with open(file_path, 'wb') as f:
            f.write(SDF_MAGIC)
            f.write(struct.pack('<3i', nx, ny, nz))
            f.write(struct.pack('<3d', *self.origin))
            f.write(struct.pack('<3d', *self.spacing))
            f.write(self.values.astype('<f4').tobytes(order='C'))
        logger.info(f"SDF-Gitter {nx}x{ny}x{nz} gespeichert: {file_path}")

    @classmethod
    def load(cls, file_path: str) -> "GridSdf":
        """
        Lädt ein Gitter im SDF1-Binärformat.

        Raises:
            FileNotFoundError: Wenn die Datei fehlt.
            OSError: Bei falschem Magic oder abgeschnittenen Daten.
        """
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"SDF-Datei nicht gefunden: {file_path}")
        with open(file_path, 'rb') as f:
            data = f.read()
        if data[:4] != SDF_MAGIC:
            raise OSError(f"Keine SDF1-Datei: {file_path}")
        nx, ny, nz = struct.unpack_from('<3i', data, 4)
        origin = struct.unpack_from('<3d', data, 16)
        spacing = struct.unpack_from('<3d', data, 40)
        expected = nx * ny * nz * 4
        payload = data[64:]
        if len(payload) != expected:
            raise OSError(f"SDF-Datei {file_path} hat {len(payload)} statt {expected} Datenbytes")
        values = np.frombuffer(payload, dtype='<f4').reshape(nx, ny, nz)
        logger.debug(f"SDF-Gitter {nx}x{ny}x{nz} geladen: {file_path}")
        return cls(values, origin, spacing)


def sdf_from_mesh(mesh: Mesh, dims: int = 64, padding: float = 0.1, bvh=None) -> GridSdf:
    """
    Tastet das Distanzfeld eines wasserdichten Netzes auf einem dichten Gitter ab.

    Args:
        mesh: Wasserdichtes Zielnetz
        dims: Anzahl Samples pro Achse
        padding: Relativer Rand um die Bounding Box
        bvh: Optional bereits gebaute BVH des Netzes

    Returns:
        GridSdf: Abgetastetes Feld
    """
    from core.bvh import Bvh

    if bvh is None:
        bvh = Bvh(mesh)
    lo, hi = mesh.bbox()
    margin = padding * float(np.max(hi - lo))
    lo = lo - margin
    hi = hi + margin
    spacing = (hi - lo) / (dims - 1)
    axes = [lo[a] + spacing[a] * np.arange(dims) for a in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, 3)
    distance = bvh.closest_point(grid).distance
    inside = bvh.is_inside(grid)
    values = np.where(inside, -distance, distance).reshape(dims, dims, dims)
    logger.info(f"SDF aus Netz abgetastet: {dims}³ Samples, Abstand {spacing.max():.4g} m")
    return GridSdf(values, lo, spacing)


@dataclass
class MarchResult:
    """Ergebnis des Ray Marchings pro Strahl."""
    valid: np.ndarray
    t: np.ndarray
    points: np.ndarray


def march_rays(sdf: SdfField, origins: np.ndarray, directions: np.ndarray, max_range: float, step: float,
               bisection_steps: int = 20, tolerance: Optional[float] = None) -> MarchResult:
    """
    Ray Marching mit konstanter Schrittweite bis zum ersten Vorzeichenwechsel.

    Alle Strahlen werden gemeinsam Schritt für Schritt vorgerückt. Ein Vorzeichenwechsel
    zwischen zwei aufeinanderfolgenden Samples wird durch Bisektion eingegrenzt und mit
    einem Sekantenschritt innerhalb des Intervalls abgeschlossen.

    Args:
        sdf: Distanzfeld
        origins: (N, 3) Startpunkte
        directions: (N, 3) Einheitsrichtungen
        max_range: Maximale Marschdistanz r
        step: Schrittweite (> 0)
        bisection_steps: Anzahl der Bisektionsschritte
        tolerance: Zulässiges |sdf| am Ergebnis (Standard 1e-6·r)

    Returns:
        MarchResult: Gültigkeit, Parameter t und Trefferpunkte
    """
    if step <= 0:
        raise ValueError(f"sdf_step muss positiv sein, erhalten {step}")
    if max_range <= 0:
        raise ValueError(f"Reichweite muss positiv sein, erhalten {max_range}")
    if tolerance is None:
        tolerance = 1e-6 * max_range
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    n = len(origins)

    f0 = sdf.query(origins)
    lo_t = np.zeros(n)
    hi_t = np.zeros(n)
    lo_f = f0.copy()
    hi_f = f0.copy()
    found = f0 == 0.0
    active = ~found
    steps = int(np.ceil(max_range / step))
    prev_t = np.zeros(n)
    prev_f = f0.copy()
    for k in range(1, steps + 1):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        t = min(k * step, max_range)
        f = sdf.query(origins[idx] + t * directions[idx])
        crossed = (f == 0.0) | (np.sign(f) != np.sign(f0[idx]))
        hit = idx[crossed]
        lo_t[hit] = prev_t[hit]
        lo_f[hit] = prev_f[hit]
        hi_t[hit] = t
        hi_f[hit] = f[crossed]
        found[hit] = True
        active[hit] = False
        prev_t[idx] = t
        prev_f[idx] = f

    idx = np.flatnonzero(found & (f0 != 0.0))
    a, b = lo_t[idx], hi_t[idx]
    fa, fb = lo_f[idx], hi_f[idx]

    def bisect(a, b, fa, fb, sel):
        mid = 0.5 * (a[sel] + b[sel])
        fm = sdf.query(origins[idx[sel]] + mid[:, None] * directions[idx[sel]])
        left = np.sign(fm) == np.sign(fa[sel])
        sa = np.flatnonzero(sel)
        a[sa[left]] = mid[left]
        fa[sa[left]] = fm[left]
        b[sa[~left]] = mid[~left]
        fb[sa[~left]] = fm[~left]

    everything = np.ones(len(idx), dtype=bool)
    for _ in range(bisection_steps):
        bisect(a, b, fa, fb, everything)
    # Nachiterieren, bis die Toleranz erreicht ist
    for _ in range(40):
        loose = np.minimum(np.abs(fa), np.abs(fb)) > tolerance
        if not loose.any():
            break
        bisect(a, b, fa, fb, loose)

    # Sekantenschritt innerhalb des Intervalls
    denom = fb - fa
    with np.errstate(divide='ignore', invalid='ignore'):
        ts = np.where(np.abs(denom) > 0, a - fa * (b - a) / denom, 0.5 * (a + b))
    ts = np.clip(ts, np.minimum(a, b), np.maximum(a, b))
    fs = sdf.query(origins[idx] + ts[:, None] * directions[idx])
    candidates_t = np.stack([ts, a, b], axis=1)
    candidates_f = np.abs(np.stack([fs, fa, fb], axis=1))
    pick = np.argmin(candidates_f, axis=1)
    best_t = candidates_t[np.arange(len(idx)), pick]
    best_f = candidates_f[np.arange(len(idx)), pick]

    t_out = np.full(n, np.nan)
    t_out[found & (f0 == 0.0)] = 0.0
    t_out[idx] = best_t
    valid = found.copy()
    loose = best_f > tolerance
    if loose.any():
        logger.warning(f"{int(loose.sum())} Strahlen erreichen die SDF-Toleranz nicht und werden verworfen")
        valid[idx[loose]] = False
    points = np.full((n, 3), np.nan)
    points[valid] = origins[valid] + t_out[valid, None] * directions[valid]
    t_out[~valid] = np.nan
    return MarchResult(valid, t_out, points)
