"""
BVH Module

Dieses Modul stellt eine Bounding Volume Hierarchy über die Dreiecke eines Netzes
bereit. Alle Abfragen (Strahlschnitt, Innen-/Außentest, nächster Oberflächenpunkt)
laufen stapelweise: ein ganzer Block von Strahlen bzw. Punkten wird Ebene für
Ebene gemeinsam durch den Baum geschoben.

Das Ergebnis jeder Abfrage ist unabhängig von der Traversierungsreihenfolge und
der Anzahl der Worker: bei gleichem Abstand gewinnt immer der kleinste Flächenindex.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
import trimesh
from scipy.spatial import cKDTree

from core.mesh import Mesh
from core.utils import run_chunked

# Logger konfigurieren
logger = logging.getLogger(__name__)

# Toleranz der baryzentrischen Koordinaten beim Strahl-Dreieck-Test
BARY_EPS = 1e-10


@dataclass
class RayHit:
    """Einzelner Treffer eines Strahls mit dem Netz."""
    t: float
    point: np.ndarray
    face: int
    bary: np.ndarray


@dataclass
class RayBatchHits:
    """Treffer eines Strahlenstapels; ungültige Einträge haben face = -1 und t = inf."""
    hit: np.ndarray
    t: np.ndarray
    face: np.ndarray
    bary: np.ndarray
    points: np.ndarray

    def get(self, i: int) -> Optional[RayHit]:
        if not self.hit[i]:
            return None
        return RayHit(float(self.t[i]), self.points[i].copy(), int(self.face[i]), self.bary[i].copy())


@dataclass
class ClosestPoints:
    """Nächste Oberflächenpunkte für einen Punktstapel."""
    points: np.ndarray
    distance: np.ndarray
    face: np.ndarray
    bary: np.ndarray


def ray_triangle_intersect(origins: np.ndarray, directions: np.ndarray,
                           v0: np.ndarray, e1: np.ndarray, e2: np.ndarray,
                           t_min: np.ndarray, t_max: np.ndarray) -> Tuple[np.ndarray, ...]:
    """
    Vektorisierter Möller-Trumbore-Test für paarweise zugeordnete Strahlen und Dreiecke.

    Args:
        origins, directions: (N, 3) Strahlen
        v0, e1, e2: (N, 3) erster Eckpunkt und Kantenvektoren des zugeordneten Dreiecks
        t_min, t_max: (N,) zulässiger Parameterbereich

    Returns:
        Tuple: (t, u, v, gültig) jeweils (N,)
    """
    p = np.cross(directions, e2)
    det = np.einsum('ij,ij->i', e1, p)
    parallel = np.abs(det) < 1e-300
    inv_det = np.divide(1.0, det, out=np.zeros_like(det), where=~parallel)
    s = origins - v0
    u = np.einsum('ij,ij->i', s, p) * inv_det
    q = np.cross(s, e1)
    v = np.einsum('ij,ij->i', directions, q) * inv_det
    t = np.einsum('ij,ij->i', e2, q) * inv_det
    valid = (~parallel) & (u >= -BARY_EPS) & (v >= -BARY_EPS) & (u + v <= 1.0 + BARY_EPS)
    valid &= (t >= t_min) & (t <= t_max)
    return t, u, v, valid


class Bvh:
    """
    Bounding Volume Hierarchy über die Dreiecke eines Netzes.

    Nach dem Aufbau ist die Struktur schreibgeschützt und kann von mehreren
    Threads gleichzeitig genutzt werden.
    """

    def __init__(self, mesh: Mesh, leaf_size: int = 8, chunk_size: int = 4096, workers: int = 1):
        """
        Baut die Hierarchie durch Median-Teilung entlang der längsten Schwerpunktachse auf.

        Args:
            mesh: Zielnetz
            leaf_size: Maximale Dreiecksanzahl pro Blatt
            chunk_size: Anzahl Strahlen/Punkte pro Traversierungsblock
            workers: Maximale Anzahl paralleler Worker für große Stapel
        """
        if mesh.face_count == 0:
            raise ValueError("BVH kann nicht über ein Netz ohne Flächen gebaut werden")
        self.mesh = mesh
        self.leaf_size = max(1, int(leaf_size))
        self.chunk_size = max(1, int(chunk_size))
        self.workers = max(1, int(workers))

        tri = mesh.triangles()
        self._tri = tri
        self._v0 = tri[:, 0]
        self._e1 = tri[:, 1] - tri[:, 0]
        self._e2 = tri[:, 2] - tri[:, 0]
        lo, hi = mesh.bbox()
        self.diagonal = float(np.linalg.norm(hi - lo))
        self._build()
        self._centroid_tree = cKDTree(tri.mean(axis=1))
        logger.debug(f"BVH aufgebaut: {mesh.face_count} Dreiecke, {len(self.node_lo)} Knoten")

    def _build(self) -> None:
        tri = self._tri
        tri_lo = tri.min(axis=1)
        tri_hi = tri.max(axis=1)
        centroids = tri.mean(axis=1)
        order = np.arange(len(tri), dtype=np.int64)

        lo_list: List[np.ndarray] = []
        hi_list: List[np.ndarray] = []
        left: List[int] = []
        right: List[int] = []
        start: List[int] = []
        count: List[int] = []

        def new_node() -> int:
            lo_list.append(None)
            hi_list.append(None)
            left.append(-1)
            right.append(-1)
            start.append(0)
            count.append(0)
            return len(left) - 1

        pad = 1e-9 * max(self.diagonal, 1e-12)
        stack = [(new_node(), 0, len(tri))]
        while stack:
            node, s, e = stack.pop()
            idx = order[s:e]
            lo_list[node] = tri_lo[idx].min(axis=0) - pad
            hi_list[node] = tri_hi[idx].max(axis=0) + pad
            if e - s <= self.leaf_size:
                start[node] = s
                count[node] = e - s
                continue
            c = centroids[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            half = (e - s) // 2
            part = np.argpartition(c[:, axis], half)
            order[s:e] = idx[part]
            l_node = new_node()
            r_node = new_node()
            left[node] = l_node
            right[node] = r_node
            stack.append((r_node, s + half, e))
            stack.append((l_node, s, s + half))

        self.face_order = order
        self.node_lo = np.array(lo_list)
        self.node_hi = np.array(hi_list)
        self.node_left = np.array(left, dtype=np.int64)
        self.node_right = np.array(right, dtype=np.int64)
        self.node_start = np.array(start, dtype=np.int64)
        self.node_count = np.array(count, dtype=np.int64)

    # ------------------------------------------------------------------
    # Hilfsfunktionen der Traversierung
    # ------------------------------------------------------------------

    def _slab(self, origins: np.ndarray, directions: np.ndarray, nodes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        lo = self.node_lo[nodes]
        hi = self.node_hi[nodes]
        with np.errstate(divide='ignore', invalid='ignore'):
            inv = 1.0 / directions
            t0 = (lo - origins) * inv
            t1 = (hi - origins) * inv
        near = np.minimum(t0, t1)
        far = np.maximum(t0, t1)
        parallel = directions == 0.0
        if parallel.any():
            inside = (origins >= lo) & (origins <= hi)
            near = np.where(parallel, np.where(inside, -np.inf, np.inf), near)
            far = np.where(parallel, np.where(inside, np.inf, -np.inf), far)
        return near.max(axis=1), far.min(axis=1)

    def _leaf_pairs(self, items: np.ndarray, nodes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        counts = self.node_count[nodes]
        starts = self.node_start[nodes]
        total = int(counts.sum())
        pair_items = np.repeat(items, counts)
        offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        pair_faces = self.face_order[np.repeat(starts, counts) + offsets]
        return pair_items, pair_faces

    def _expand(self, items: np.ndarray, nodes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return (np.concatenate([items, items]),
                np.concatenate([self.node_left[nodes], self.node_right[nodes]]))

    def _run_chunks(self, fn: Callable, n: int, *arrays) -> List:
        return run_chunked(fn, n, self.chunk_size, self.workers, *arrays)

    # ------------------------------------------------------------------
    # Strahlschnitt
    # ------------------------------------------------------------------

    def raycast_batch(self, origins, directions, t_min=0.0, t_max=np.inf) -> RayBatchHits:
        """
        Nächster Treffer für jeden Strahl eines Stapels.

        Args:
            origins: (N, 3) Strahlursprünge
            directions: (N, 3) Einheitsrichtungen
            t_min, t_max: Skalar oder (N,) Parameterbereich, 0 <= t_min < t_max

        Returns:
            RayBatchHits: Treffer pro Strahl; bei Gleichstand entscheidet der kleinste Flächenindex.
        """
        origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
        directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
        n = len(origins)
        t_min = np.broadcast_to(np.asarray(t_min, dtype=np.float64), (n,)).copy()
        t_max = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n,)).copy()
        if n == 0:
            return RayBatchHits(np.zeros(0, bool), np.zeros(0), np.zeros(0, np.int64),
                                np.zeros((0, 3)), np.zeros((0, 3)))
        parts = self._run_chunks(self._raycast_chunk, n, origins, directions, t_min, t_max)
        t = np.concatenate([p[0] for p in parts])
        face = np.concatenate([p[1] for p in parts])
        u = np.concatenate([p[2] for p in parts])
        v = np.concatenate([p[3] for p in parts])
        hit = face >= 0
        bary = np.stack([1.0 - u - v, u, v], axis=1)
        bary[~hit] = 0.0
        points = origins + np.where(hit, t, 0.0)[:, None] * directions
        points[~hit] = np.nan
        return RayBatchHits(hit, t, face, bary, points)

    def _raycast_chunk(self, o, d, tmin, tmax):
        n = len(o)
        best_t = np.full(n, np.inf)
        best_f = np.full(n, -1, dtype=np.int64)
        best_u = np.zeros(n)
        best_v = np.zeros(n)
        rays = np.arange(n)
        nodes = np.zeros(n, dtype=np.int64)
        while len(rays):
            near, far = self._slab(o[rays], d[rays], nodes)
            limit = np.minimum(tmax[rays], best_t[rays])
            keep = (near <= far) & (far >= tmin[rays]) & (near <= limit)
            rays, nodes = rays[keep], nodes[keep]
            leaf = self.node_left[nodes] < 0
            if leaf.any():
                pr, pf = self._leaf_pairs(rays[leaf], nodes[leaf])
                t, u, v, ok = ray_triangle_intersect(o[pr], d[pr], self._v0[pf], self._e1[pf], self._e2[pf],
                                                     tmin[pr], tmax[pr])
                if ok.any():
                    pr, pf, t, u, v = pr[ok], pf[ok], t[ok], u[ok], v[ok]
                    order = np.lexsort((pf, t, pr))
                    pr, pf, t, u, v = pr[order], pf[order], t[order], u[order], v[order]
                    _, first = np.unique(pr, return_index=True)
                    pr, pf, t, u, v = pr[first], pf[first], t[first], u[first], v[first]
                    better = (t < best_t[pr]) | ((t == best_t[pr]) & ((best_f[pr] < 0) | (pf < best_f[pr])))
                    pr, pf, t, u, v = pr[better], pf[better], t[better], u[better], v[better]
                    best_t[pr] = t
                    best_f[pr] = pf
                    best_u[pr] = u
                    best_v[pr] = v
            inner = ~leaf
            rays, nodes = self._expand(rays[inner], nodes[inner])
        return best_t, best_f, best_u, best_v

    def raycast(self, origin, direction, t_min: float = 0.0, t_max: float = np.inf) -> Optional[RayHit]:
        """
        Nächster Treffer eines einzelnen Strahls im Bereich [t_min, t_max].

        Returns:
            Optional[RayHit]: Treffer oder None
        """
        if not (0.0 <= t_min < t_max):
            raise ValueError(f"Ungültiger Parameterbereich [{t_min}, {t_max}]")
        hits = self.raycast_batch(np.asarray(origin)[None], np.asarray(direction)[None], t_min, t_max)
        return hits.get(0)

    # ------------------------------------------------------------------
    # Innen-/Außentest
    # ------------------------------------------------------------------

    def count_crossings(self, origins, directions, t_min=0.0, t_max=np.inf,
                        merge_tol: Optional[float] = None) -> np.ndarray:
        """
        Zählt die Oberflächendurchgänge entlang jedes Strahls.

        Treffer mit nahezu gleichem Parameter t (gemeinsame Kante oder Ecke)
        werden zu einem Durchgang zusammengefasst.
        """
        origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
        directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
        n = len(origins)
        if merge_tol is None:
            merge_tol = 1e-9 * max(self.diagonal, 1e-12)
        t_min = np.broadcast_to(np.asarray(t_min, dtype=np.float64), (n,)).copy()
        t_max = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n,)).copy()
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        parts = self._run_chunks(lambda o, d, a, b: self._crossings_chunk(o, d, a, b, merge_tol),
                                 n, origins, directions, t_min, t_max)
        return np.concatenate(parts)

    def _crossings_chunk(self, o, d, tmin, tmax, merge_tol):
        n = len(o)
        hit_rays, hit_t = [], []
        rays = np.arange(n)
        nodes = np.zeros(n, dtype=np.int64)
        while len(rays):
            near, far = self._slab(o[rays], d[rays], nodes)
            keep = (near <= far) & (far >= tmin[rays]) & (near <= tmax[rays])
            rays, nodes = rays[keep], nodes[keep]
            leaf = self.node_left[nodes] < 0
            if leaf.any():
                pr, pf = self._leaf_pairs(rays[leaf], nodes[leaf])
                t, _, _, ok = ray_triangle_intersect(o[pr], d[pr], self._v0[pf], self._e1[pf], self._e2[pf],
                                                     tmin[pr], tmax[pr])
                hit_rays.append(pr[ok])
                hit_t.append(t[ok])
            inner = ~leaf
            rays, nodes = self._expand(rays[inner], nodes[inner])
        counts = np.zeros(n, dtype=np.int64)
        if hit_rays:
            r = np.concatenate(hit_rays)
            t = np.concatenate(hit_t)
            if len(r):
                order = np.lexsort((t, r))
                r, t = r[order], t[order]
                distinct = np.ones(len(r), dtype=bool)
                distinct[1:] = (r[1:] != r[:-1]) | (t[1:] - t[:-1] > merge_tol)
                counts = np.bincount(r[distinct], minlength=n)
        return counts

    def is_inside(self, points) -> np.ndarray:
        """
        Paritätstest entlang +x mit Selbsttreffer-Epsilon 1e-6·Diagonale.

        Für wasserdichte Netze exakt; bei offenen Netzen nur bestmöglich,
        eine gerade Anzahl an Durchgängen gilt als außen.

        Returns:
            np.ndarray: (N,) True für Punkte innerhalb der Oberfläche
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        directions = np.tile(np.array([1.0, 0.0, 0.0]), (len(points), 1))
        counts = self.count_crossings(points, directions, t_min=1e-6 * self.diagonal)
        return counts % 2 == 1

    # ------------------------------------------------------------------
    # Nächster Oberflächenpunkt
    # ------------------------------------------------------------------

    def closest_point(self, points) -> ClosestPoints:
        """
        Nächster Punkt auf der Oberfläche für jeden Abfragepunkt.

        Returns:
            ClosestPoints: Punkte, Abstände, Flächenindizes und baryzentrische Koordinaten
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        n = len(points)
        if n == 0:
            return ClosestPoints(np.zeros((0, 3)), np.zeros(0), np.zeros(0, np.int64), np.zeros((0, 3)))
        parts = self._run_chunks(self._closest_chunk, n, points)
        best_d2 = np.concatenate([p[0] for p in parts])
        best_f = np.concatenate([p[1] for p in parts])
        closest = np.concatenate([p[2] for p in parts])
        tri = self._tri[best_f]
        bary = trimesh.triangles.points_to_barycentric(tri, closest)
        return ClosestPoints(closest, np.sqrt(best_d2), best_f, bary)

    def _closest_chunk(self, p):
        n = len(p)
        _, seed = self._centroid_tree.query(p)
        seed = np.asarray(seed, dtype=np.int64)
        best_cp = trimesh.triangles.closest_point(self._tri[seed], p)
        best_d2 = ((best_cp - p) ** 2).sum(axis=1)
        best_f = seed.copy()
        items = np.arange(n)
        nodes = np.zeros(n, dtype=np.int64)
        while len(items):
            lo = self.node_lo[nodes]
            hi = self.node_hi[nodes]
            q = p[items]
            box_d2 = ((q - np.clip(q, lo, hi)) ** 2).sum(axis=1)
            keep = box_d2 <= best_d2[items]
            items, nodes = items[keep], nodes[keep]
            leaf = self.node_left[nodes] < 0
            if leaf.any():
                pi, pf = self._leaf_pairs(items[leaf], nodes[leaf])
                cp = trimesh.triangles.closest_point(self._tri[pf], p[pi])
                d2 = ((cp - p[pi]) ** 2).sum(axis=1)
                order = np.lexsort((pf, d2, pi))
                pi, pf, d2, cp = pi[order], pf[order], d2[order], cp[order]
                _, first = np.unique(pi, return_index=True)
                pi, pf, d2, cp = pi[first], pf[first], d2[first], cp[first]
                better = (d2 < best_d2[pi]) | ((d2 == best_d2[pi]) & (pf < best_f[pi]))
                pi, pf, d2, cp = pi[better], pf[better], d2[better], cp[better]
                best_d2[pi] = d2
                best_f[pi] = pf
                best_cp[pi] = cp
            inner = ~leaf
            items, nodes = self._expand(items[inner], nodes[inner])
        return best_d2, best_f, best_cp


def is_inside(bvh: Bvh, point) -> bool:
    """Innen-/Außentest für einen einzelnen Punkt."""
    return bool(bvh.is_inside(np.asarray(point, dtype=np.float64)[None])[0])


def raycast(bvh: Bvh, origin, direction, t_min: float = 0.0, t_max: float = np.inf) -> Optional[RayHit]:
    """Funktionale Kurzform von Bvh.raycast."""
    return bvh.raycast(origin, direction, t_min, t_max)
