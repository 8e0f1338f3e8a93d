"""
Mesh Module

Dieses Modul definiert das grundlegende Datenmodell für indizierte Dreiecksnetze
sowie die elementaren geometrischen Abfragen darauf (Normalen, Kanten,
Zusammenhangskomponenten, Dreiecksqualität).

Die Reihenfolge der Vertices ist semantische Identität: keine Funktion in diesem
Modul nummeriert Vertices um.
"""

import logging
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _csgraph_components

# Logger konfigurieren
logger = logging.getLogger(__name__)

# Flächen unterhalb dieser Schwelle (m²) gelten als degeneriert
DEGENERATE_AREA = 1e-12


class Mesh:
    """Datenmodell für ein indiziertes Dreiecksnetz mit optionalen Vertexfarben."""

    def __init__(self, positions, faces, colors=None):
        """
        Initialisiert das Netz und prüft die Indizes.

        Args:
            positions: (V, 3) Vertexpositionen in Metern
            faces: (F, 3) Vertexindizes pro Dreieck
            colors: Optionale (V, 3) RGB-Farben in [0, 1]

        Raises:
            ValueError: Bei falschen Formen, ungültigen Indizes oder doppelten Indizes in einem Dreieck.
        """
        self.positions = np.ascontiguousarray(np.asarray(positions, dtype=np.float64).reshape(-1, 3))
        self.faces = np.ascontiguousarray(np.asarray(faces, dtype=np.int64).reshape(-1, 3))
        self.colors = None
        if colors is not None:
            self.colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
            if len(self.colors) != len(self.positions):
                raise ValueError(
                    f"Anzahl der Farben ({len(self.colors)}) passt nicht zur Vertexanzahl ({len(self.positions)})"
                )
        self._validate()

    def _validate(self) -> None:
        """Prüft die Invarianten der Flächenliste."""
        if len(self.faces) == 0:
            return
        if self.faces.min() < 0 or self.faces.max() >= len(self.positions):
            raise ValueError(
                f"Flächenindex außerhalb des Bereichs [0, {len(self.positions)})"
            )
        f = self.faces
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise ValueError("Mindestens ein Dreieck referenziert denselben Vertex mehrfach")

    @property
    def vertex_count(self) -> int:
        return len(self.positions)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    def copy(self) -> "Mesh":
        """Gibt eine tiefe Kopie des Netzes zurück."""
        colors = None if self.colors is None else self.colors.copy()
        return Mesh(self.positions.copy(), self.faces.copy(), colors)

    def with_positions(self, positions) -> "Mesh":
        """
        Erzeugt ein Netz gleicher Konnektivität mit neuen Positionen.

        Args:
            positions: (V, 3) neue Positionen, gleiche Anzahl wie bisher

        Returns:
            Mesh: Neues Netz
        """
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        if len(positions) != self.vertex_count:
            raise ValueError(
                f"Positionsanzahl {len(positions)} weicht von der Vertexanzahl {self.vertex_count} ab"
            )
        return Mesh(positions, self.faces, self.colors)

    def triangles(self) -> np.ndarray:
        """Gibt die Eckpunkte aller Dreiecke als (F, 3, 3) Array zurück."""
        return self.positions[self.faces]

    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        """Achsenparallele Bounding Box über alle Vertices."""
        if self.vertex_count == 0:
            return np.zeros(3), np.zeros(3)
        return self.positions.min(axis=0), self.positions.max(axis=0)

    def bbox_diagonal(self) -> float:
        """Länge der Bounding-Box-Diagonale in Metern."""
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    def __str__(self) -> str:
        return f"Mesh({self.vertex_count} Vertices, {self.face_count} Flächen)"


def _face_cross(mesh: Mesh) -> np.ndarray:
    tri = mesh.triangles()
    return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])


def face_areas(mesh: Mesh) -> np.ndarray:
    """Flächeninhalt jedes Dreiecks in m²."""
    if mesh.face_count == 0:
        return np.zeros(0)
    return 0.5 * np.linalg.norm(_face_cross(mesh), axis=1)


def face_normals(mesh: Mesh) -> Tuple[np.ndarray, np.ndarray]:
    """
    Berechnet die Einheitsnormalen aller Dreiecke (Orientierung gegen den Uhrzeigersinn).

    Args:
        mesh: Das Eingabenetz

    Returns:
        Tuple[np.ndarray, np.ndarray]: (F, 3) Normalen und (F,) Flag für degenerierte Dreiecke.
        Degenerierte Dreiecke erhalten den Nullvektor.
    """
    if mesh.face_count == 0:
        return np.zeros((0, 3)), np.zeros(0, dtype=bool)
    cross = _face_cross(mesh)
    length = np.linalg.norm(cross, axis=1)
    degenerate = 0.5 * length < DEGENERATE_AREA
    normals = np.zeros_like(cross)
    ok = ~degenerate
    normals[ok] = cross[ok] / length[ok, None]
    if degenerate.any():
        logger.warning(f"{int(degenerate.sum())} degenerierte Dreiecke beim Berechnen der Flächennormalen")
    return normals, degenerate


def vertex_normals(mesh: Mesh) -> Tuple[np.ndarray, np.ndarray]:
    """
    Flächengewichtete Vertexnormalen.

    Die Summe der ungenormten Kreuzprodukte anliegender Dreiecke entspricht der
    Gewichtung mit dem doppelten Flächeninhalt.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (V, 3) Einheitsnormalen und (V,) Flag für Vertices
        ohne definierte Normale (isoliert oder nur degenerierte Nachbarn).
    """
    accum = np.zeros((mesh.vertex_count, 3))
    if mesh.face_count:
        cross = _face_cross(mesh)
        for k in range(3):
            np.add.at(accum, mesh.faces[:, k], cross)
    length = np.linalg.norm(accum, axis=1)
    flagged = length <= 1e-300
    normals = np.zeros_like(accum)
    ok = ~flagged
    normals[ok] = accum[ok] / length[ok, None]
    if flagged.any():
        logger.warning(f"{int(flagged.sum())} Vertices ohne Normale (isoliert oder degeneriert)")
    return normals, flagged


def edge_lengths(mesh: Mesh) -> np.ndarray:
    """(F, 3) Kantenlängen in der Reihenfolge (v0v1, v1v2, v2v0)."""
    tri = mesh.triangles()
    return np.stack([
        np.linalg.norm(tri[:, 1] - tri[:, 0], axis=1),
        np.linalg.norm(tri[:, 2] - tri[:, 1], axis=1),
        np.linalg.norm(tri[:, 0] - tri[:, 2], axis=1),
    ], axis=1)


def unique_edges(faces: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Ermittelt die ungerichteten Kanten in kanonischer Reihenfolge.

    Args:
        faces: (F, 3) Flächenindizes

    Returns:
        Tuple[np.ndarray, np.ndarray]: (E, 2) Kanten als sortierte (min, max)-Paare in
        lexikographischer Ordnung und (F, 3) Kantenindex pro Flächenkante
        (v0v1, v1v2, v2v0).
    """
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(faces) == 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros((0, 3), dtype=np.int64)
    corner_pairs = np.stack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=1).reshape(-1, 2)
    corner_pairs = np.sort(corner_pairs, axis=1)
    edges, inverse = np.unique(corner_pairs, axis=0, return_inverse=True)
    return edges, inverse.reshape(-1, 3)


def vertex_adjacency(mesh: Mesh) -> sp.csr_matrix:
    """Symmetrische (V, V) Adjazenzmatrix mit Einsen für jede Netzkante."""
    edges, _ = unique_edges(mesh.faces)
    n = mesh.vertex_count
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    data = np.ones(len(rows))
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def connected_components(mesh: Mesh) -> Tuple[np.ndarray, np.ndarray]:
    """
    Zerlegt die Flächen in Zusammenhangskomponenten über gemeinsame Kanten.

    Zwei Dreiecke, die sich nur einen Vertex teilen, liegen in verschiedenen
    Komponenten.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (F,) Komponenten-ID pro Fläche (in Reihenfolge
        des ersten Auftretens) und Flächenanzahl pro Komponente.
    """
    n_faces = mesh.face_count
    if n_faces == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    _, face_edges = unique_edges(mesh.faces)
    n_edges = int(face_edges.max()) + 1
    # Bipartiter Graph Fläche <-> Kante
    rows = np.repeat(np.arange(n_faces), 3)
    cols = n_faces + face_edges.reshape(-1)
    size = n_faces + n_edges
    graph = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(size, size))
    _, labels = _csgraph_components(graph, directed=False)
    face_labels = labels[:n_faces]
    _, first, relabeled = np.unique(face_labels, return_index=True, return_inverse=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    component_ids = remap[relabeled.reshape(-1)]
    counts = np.bincount(component_ids, minlength=len(order))
    return component_ids, counts


def remove_faces(mesh: Mesh, faces_to_remove) -> Mesh:
    """
    Entfernt Dreiecke, ohne Vertices zu entfernen oder umzunummerieren.

    Args:
        mesh: Das Eingabenetz
        faces_to_remove: Iterierbare Menge von Flächenindizes

    Returns:
        Mesh: Netz mit reduzierter Flächenliste und unveränderter Vertexliste

    Raises:
        IndexError: Wenn ein Index außerhalb von [0, F) liegt.
    """
    idx = np.asarray(list(faces_to_remove) if not isinstance(faces_to_remove, np.ndarray) else faces_to_remove,
                     dtype=np.int64).reshape(-1)
    if len(idx) and (idx.min() < 0 or idx.max() >= mesh.face_count):
        raise IndexError(f"Flächenindex außerhalb des Bereichs [0, {mesh.face_count})")
    keep = np.ones(mesh.face_count, dtype=bool)
    keep[idx] = False
    return Mesh(mesh.positions.copy(), mesh.faces[keep],
                None if mesh.colors is None else mesh.colors.copy())


def triangle_quality(mesh: Mesh) -> Tuple[np.ndarray, np.ndarray]:
    """
    Dreiecksqualität q = 4·√3·A / (l1² + l2² + l3²).

    Gleichseitige Dreiecke haben q = 1; degenerierte Dreiecke erhalten q = 0.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (F,) Qualitätswerte und (F,) Degenerations-Flag
    """
    if mesh.face_count == 0:
        return np.zeros(0), np.zeros(0, dtype=bool)
    area = face_areas(mesh)
    lengths = edge_lengths(mesh)
    denom = (lengths ** 2).sum(axis=1)
    degenerate = (area < DEGENERATE_AREA) | (denom <= 0.0)
    quality = np.zeros(mesh.face_count)
    ok = ~degenerate
    quality[ok] = 4.0 * np.sqrt(3.0) * area[ok] / denom[ok]
    if degenerate.any():
        logger.warning(f"{int(degenerate.sum())} degenerierte Dreiecke bei der Qualitätsberechnung")
    return quality, degenerate


def min_interior_angles(mesh: Mesh) -> np.ndarray:
    """Kleinster Innenwinkel jedes Dreiecks in Grad (0 für degenerierte Dreiecke)."""
    if mesh.face_count == 0:
        return np.zeros(0)
    tri = mesh.triangles()
    angles = []
    for k in range(3):
        a = tri[:, (k + 1) % 3] - tri[:, k]
        b = tri[:, (k + 2) % 3] - tri[:, k]
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        denom = na * nb
        cos = np.divide((a * b).sum(axis=1), denom, out=np.ones_like(denom), where=denom > 0)
        angles.append(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
    result = np.min(np.stack(angles, axis=1), axis=1)
    result[face_areas(mesh) < DEGENERATE_AREA] = 0.0
    return result


def referenced_vertices(mesh: Mesh) -> np.ndarray:
    """(V,) Bool-Maske der Vertices, die von mindestens einer Fläche referenziert werden."""
    used = np.zeros(mesh.vertex_count, dtype=bool)
    if mesh.face_count:
        used[mesh.faces.reshape(-1)] = True
    return used


def merge_meshes(meshes) -> Mesh:
    """Fügt mehrere Netze zu einem Netz zusammen (Indizes werden verschoben)."""
    positions, faces, offset = [], [], 0
    for m in meshes:
        positions.append(m.positions)
        faces.append(m.faces + offset)
        offset += m.vertex_count
    if not positions:
        return Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    return Mesh(np.concatenate(positions), np.concatenate(faces))
