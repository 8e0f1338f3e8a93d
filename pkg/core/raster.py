"""
Raster Module

Dieses Modul enthält die Scan-Konvertierung von Dreiecken in ein Pixel- bzw.
Texelraster. Sie wird an zwei Stellen verwendet: im UV-Raum (Positions- und
Attributkarten eines Templates) und im Bildraum (Z-Buffer-Rendering von
Normalenbildern).

Überlappen sich Dreiecke, gewinnt ohne Tiefe der kleinste Flächenindex,
mit Tiefe die kleinste Tiefe und bei Gleichstand der kleinste Flächenindex.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import distance_transform_edt

from core.uv_map import UvMap, parse_resolution, uv_to_pixel

# Logger konfigurieren
logger = logging.getLogger(__name__)

# Toleranz für Texelzentren auf einer Dreieckskante
EDGE_EPS = 1e-9

# Maximale Anzahl an Kandidaten-Texeln pro Verarbeitungsblock
CANDIDATE_BUDGET = 1_000_000


def scan_triangles(tri_xy: np.ndarray, height: int, width: int, depth: Optional[np.ndarray] = None,
                   face_active: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Rastert Dreiecke in Pixelkoordinaten (Zentrum von Pixel (i, j) bei x = j, y = i).

    Args:
        tri_xy: (F, 3, 2) Eckpunkte in Pixelkoordinaten
        height, width: Rastergröße
        depth: Optional (F, 3) Tiefen pro Ecke für den Z-Buffer
        face_active: Optional (F,) Maske der zu rasternden Dreiecke

    Returns:
        Tuple: (H, W) Flächenindex (-1 = leer), (H, W, 3) baryzentrische Koordinaten,
        (F,) Flag für degenerierte Dreiecke
    """
    tri_xy = np.asarray(tri_xy, dtype=np.float64)
    n_faces = len(tri_xy)
    pixel_face = np.full((height, width), -1, dtype=np.int64)
    pixel_bary = np.zeros((height, width, 3))
    pixel_depth = np.full((height, width), np.inf)

    a = tri_xy[:, 0]
    e1 = tri_xy[:, 1] - a
    e2 = tri_xy[:, 2] - a
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    degenerate = np.abs(det) <= 1e-14 * max(height * width, 1)
    if degenerate.any():
        logger.warning(f"{int(degenerate.sum())} degenerierte Dreiecke beim Rastern übersprungen")
    active = ~degenerate
    if face_active is not None:
        active &= np.asarray(face_active, dtype=bool)

    x_min = np.clip(np.ceil(tri_xy[:, :, 0].min(axis=1) - EDGE_EPS), 0, width - 1).astype(np.int64)
    x_max = np.clip(np.floor(tri_xy[:, :, 0].max(axis=1) + EDGE_EPS), -1, width - 1).astype(np.int64)
    y_min = np.clip(np.ceil(tri_xy[:, :, 1].min(axis=1) - EDGE_EPS), 0, height - 1).astype(np.int64)
    y_max = np.clip(np.floor(tri_xy[:, :, 1].max(axis=1) + EDGE_EPS), -1, height - 1).astype(np.int64)
    nx = np.maximum(x_max - x_min + 1, 0)
    ny = np.maximum(y_max - y_min + 1, 0)
    counts = np.where(active, nx * ny, 0)

    faces = np.flatnonzero(counts > 0)
    start = 0
    while start < len(faces):
        # Block so wählen, dass das Kandidatenbudget eingehalten wird
        cum = np.cumsum(counts[faces[start:]])
        stop = start + max(1, int(np.searchsorted(cum, CANDIDATE_BUDGET, side='right')))
        block = faces[start:stop]
        start = stop

        c = counts[block]
        f = np.repeat(block, c)
        local = np.arange(int(c.sum())) - np.repeat(np.cumsum(c) - c, c)
        jj = x_min[f] + local % nx[f]
        ii = y_min[f] + local // nx[f]
        px = jj - a[f, 0]
        py = ii - a[f, 1]
        l1 = (px * e2[f, 1] - py * e2[f, 0]) / det[f]
        l2 = (e1[f, 0] * py - e1[f, 1] * px) / det[f]
        l0 = 1.0 - l1 - l2
        inside = (l0 >= -EDGE_EPS) & (l1 >= -EDGE_EPS) & (l2 >= -EDGE_EPS)
        f, ii, jj, l0, l1, l2 = f[inside], ii[inside], jj[inside], l0[inside], l1[inside], l2[inside]
        if len(f) == 0:
            continue
        texel = ii * width + jj
        if depth is None:
            z = np.zeros(len(f))
        else:
            z = l0 * depth[f, 0] + l1 * depth[f, 1] + l2 * depth[f, 2]
        order = np.lexsort((f, z, texel))
        texel, f, z = texel[order], f[order], z[order]
        bary = np.stack([l0, l1, l2], axis=1)[order]
        _, first = np.unique(texel, return_index=True)
        texel, f, z, bary = texel[first], f[first], z[first], bary[first]

        ti, tj = np.divmod(texel, width)
        current_f = pixel_face[ti, tj]
        current_z = pixel_depth[ti, tj]
        better = (current_f < 0) | (z < current_z) | ((z == current_z) & (f < current_f))
        ti, tj = ti[better], tj[better]
        pixel_face[ti, tj] = f[better]
        pixel_depth[ti, tj] = z[better]
        pixel_bary[ti, tj] = bary[better]

    return pixel_face, pixel_bary, degenerate


def first_uv_index(faces: np.ndarray, uv_faces: np.ndarray, vertex_count: int) -> np.ndarray:
    """
    UV-Index des ersten Auftretens jedes Vertex in Flächenreihenfolge.

    Returns:
        np.ndarray: (V,) UV-Index oder -1 für unreferenzierte Vertices
    """
    flat_v = np.asarray(faces, dtype=np.int64).reshape(-1)
    flat_uv = np.asarray(uv_faces, dtype=np.int64).reshape(-1)
    result = np.full(vertex_count, -1, dtype=np.int64)
    if len(flat_v):
        verts, first = np.unique(flat_v, return_index=True)
        result[verts] = flat_uv[first]
    return result


class UvRasterizer:
    """
    Zwischengespeicherte Rasterung des UV-Atlas eines Templates.

    Pro Texel werden Flächenindex und baryzentrische Koordinaten einmal bestimmt;
    alle Karten einer Auflösung teilen sich damit dieselbe Abdeckung.
    """

    def __init__(self, uv_positions: np.ndarray, uv_faces: np.ndarray, faces: np.ndarray, resolution):
        self.height, self.width = parse_resolution(resolution)
        self.uv_positions = np.asarray(uv_positions, dtype=np.float64).reshape(-1, 2)
        self.uv_faces = np.asarray(uv_faces, dtype=np.int64).reshape(-1, 3)
        self.faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if len(self.uv_faces) != len(self.faces):
            raise ValueError(f"{len(self.uv_faces)} UV-Flächen für {len(self.faces)} Flächen")
        self.vertex_count = int(self.faces.max()) + 1 if len(self.faces) else 0

        tri_xy = uv_to_pixel(self.uv_positions[self.uv_faces], self.height, self.width)
        self.texel_face, self.texel_bary, self.degenerate = scan_triangles(tri_xy, self.height, self.width)
        self.coverage = self.texel_face >= 0
        self._nearest_covered = None
        logger.debug(f"UV-Atlas gerastert: {self.height}x{self.width}, {int(self.coverage.sum())} Texel abgedeckt")

    @classmethod
    def for_template(cls, tmpl, resolution) -> "UvRasterizer":
        return cls(tmpl.uv_positions, tmpl.uv_faces, tmpl.mesh.faces, resolution)

    @property
    def resolution(self) -> Tuple[int, int]:
        return self.height, self.width

    def rasterize(self, values, per_uv: bool = False) -> UvMap:
        """
        Interpoliert ein Vertex- (oder UV-) Attribut baryzentrisch in jeden abgedeckten Texel.

        Args:
            values: (V, K) Attribut pro Vertex bzw. (U, K) pro UV-Position bei per_uv
            per_uv: Attribut ist über UV-Indizes statt Vertexindizes adressiert

        Returns:
            UvMap: H×W×K Karte
        """
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        index = self.uv_faces if per_uv else self.faces
        expected = len(self.uv_positions) if per_uv else self.vertex_count
        if len(values) < expected:
            raise ValueError(f"Attribut hat {len(values)} Einträge, erwartet mindestens {expected}")
        data = np.zeros((self.height, self.width, values.shape[1]))
        cov = self.coverage
        corners = index[self.texel_face[cov]]
        bary = self.texel_bary[cov]
        data[cov] = (bary[:, 0:1] * values[corners[:, 0]]
                     + bary[:, 1:2] * values[corners[:, 1]]
                     + bary[:, 2:3] * values[corners[:, 2]])
        return UvMap(data, cov)

    def texels_of_faces(self, face_mask: np.ndarray) -> np.ndarray:
        """(H, W) Maske der Texel, deren Dreieck in face_mask gesetzt ist."""
        face_mask = np.asarray(face_mask, dtype=bool)
        result = np.zeros(self.coverage.shape, dtype=bool)
        result[self.coverage] = face_mask[self.texel_face[self.coverage]]
        return result

    def vertex_uvs(self) -> Tuple[np.ndarray, np.ndarray]:
        """UV-Position des ersten Auftretens jedes Vertex und Flag für Vertices ohne UV."""
        idx = first_uv_index(self.faces, self.uv_faces, self.vertex_count)
        missing = idx < 0
        uv = np.zeros((self.vertex_count, 2))
        uv[~missing] = self.uv_positions[idx[~missing]]
        return uv, missing

    def nearest_covered_index(self) -> Tuple[np.ndarray, np.ndarray]:
        """Für jeden Texel die Zeilen-/Spaltenindizes des nächsten abgedeckten Texels."""
        if self._nearest_covered is None:
            _, indices = distance_transform_edt(~self.coverage, return_indices=True)
            self._nearest_covered = (indices[0], indices[1])
        return self._nearest_covered

    def sample(self, uv_map: UvMap, uv: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Bilineares Abtasten an UV-Positionen, beschränkt auf abgedeckte Texel.

        Nicht abgedeckte Nachbarn fallen aus der Schablone; die Gewichte werden
        neu normiert. Ohne abgedeckten Nachbarn wird der nächste abgedeckte Texel
        verwendet und der Punkt markiert.

        Returns:
            Tuple[np.ndarray, np.ndarray]: (N, C) Werte und (N,) Flag
        """
        nearest = self.nearest_covered_index() if np.array_equal(uv_map.coverage, self.coverage) else None
        return sample_bilinear(uv_map, uv, nearest)

    def resample_vertices(self, uv_map: UvMap) -> Tuple[np.ndarray, np.ndarray]:
        """Tastet die Karte an der ersten UV-Position jedes Vertex ab."""
        uv, missing = self.vertex_uvs()
        values, flagged = self.sample(uv_map, uv)
        flagged = flagged | missing
        values[missing] = 0.0
        return values, flagged

    def seam_links(self) -> np.ndarray:
        """
        Texelpaare beidseits der UV-Nähte.

        Jede geometrische Kante mit zwei verschiedenen UV-Kanten wird auf beiden
        Seiten gleichmäßig abgetastet; die jeweils nächsten abgedeckten Texel
        werden verknüpft.

        Returns:
            np.ndarray: (L, 2) lineare Texelindizes
        """
        faces, uv_faces = self.faces, self.uv_faces
        corner = np.array([[0, 1], [1, 2], [2, 0]])
        v_pairs = faces[:, corner].reshape(-1, 2)
        uv_pairs = uv_faces[:, corner].reshape(-1, 2)
        swap = v_pairs[:, 0] > v_pairs[:, 1]
        v_pairs = np.where(swap[:, None], v_pairs[:, ::-1], v_pairs)
        uv_pairs = np.where(swap[:, None], uv_pairs[:, ::-1], uv_pairs)
        order = np.lexsort((uv_pairs[:, 1], uv_pairs[:, 0], v_pairs[:, 1], v_pairs[:, 0]))
        v_pairs, uv_pairs = v_pairs[order], uv_pairs[order]
        same_edge = np.all(v_pairs[1:] == v_pairs[:-1], axis=1)
        different_uv = np.any(uv_pairs[1:] != uv_pairs[:-1], axis=1)
        seam = np.flatnonzero(same_edge & different_uv)
        if len(seam) == 0:
            return np.zeros((0, 2), dtype=np.int64)

        near_i, near_j = self.nearest_covered_index()
        links = []
        for k in seam:
            side_a = uv_to_pixel(self.uv_positions[uv_pairs[k]], self.height, self.width)
            side_b = uv_to_pixel(self.uv_positions[uv_pairs[k + 1]], self.height, self.width)
            length = max(np.linalg.norm(side_a[1] - side_a[0]), np.linalg.norm(side_b[1] - side_b[0]))
            s = np.linspace(0.0, 1.0, int(np.ceil(length)) + 2)[:, None]
            pa = side_a[0] + s * (side_a[1] - side_a[0])
            pb = side_b[0] + s * (side_b[1] - side_b[0])
            ia, ja = self._nearest_texel(pa, near_i, near_j)
            ib, jb = self._nearest_texel(pb, near_i, near_j)
            links.append(np.stack([ia * self.width + ja, ib * self.width + jb], axis=1))
        links = np.concatenate(links)
        links = links[links[:, 0] != links[:, 1]]
        links = np.sort(links, axis=1)
        return np.unique(links, axis=0)

    def _nearest_texel(self, pixel_xy, near_i, near_j):
        j = np.clip(np.rint(pixel_xy[:, 0]).astype(np.int64), 0, self.width - 1)
        i = np.clip(np.rint(pixel_xy[:, 1]).astype(np.int64), 0, self.height - 1)
        return near_i[i, j].astype(np.int64), near_j[i, j].astype(np.int64)


def sample_bilinear(uv_map: UvMap, uv: np.ndarray, nearest_covered=None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Abdeckungsbewusstes bilineares Abtasten einer UV-Karte.

    Args:
        uv_map: Quellkarte
        uv: (N, 2) UV-Koordinaten
        nearest_covered: Optional vorberechnete Indizes des nächsten abgedeckten Texels

    Returns:
        Tuple[np.ndarray, np.ndarray]: (N, C) Werte und (N,) Flag für Punkte ohne abgedeckte Nachbarn
    """
    h, w = uv_map.shape
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    if not uv_map.coverage.any():
        raise ValueError("UV-Karte ohne Abdeckung kann nicht abgetastet werden")
    pix = uv_to_pixel(uv, h, w)
    x, y = pix[:, 0], pix[:, 1]
    j0 = np.floor(x).astype(np.int64)
    i0 = np.floor(y).astype(np.int64)
    fx = x - j0
    fy = y - i0
    data = uv_map.data.astype(np.float64)
    acc = np.zeros((len(uv), uv_map.channels))
    weight = np.zeros(len(uv))
    for di, dj, wgt in ((0, 0, (1 - fy) * (1 - fx)), (0, 1, (1 - fy) * fx),
                        (1, 0, fy * (1 - fx)), (1, 1, fy * fx)):
        ii = i0 + di
        jj = j0 + dj
        inside = (ii >= 0) & (ii < h) & (jj >= 0) & (jj < w)
        ic = np.clip(ii, 0, h - 1)
        jc = np.clip(jj, 0, w - 1)
        usable = inside & uv_map.coverage[ic, jc]
        wu = np.where(usable, wgt, 0.0)
        acc += wu[:, None] * data[ic, jc]
        weight += wu
    flagged = weight <= 1e-12
    values = np.zeros_like(acc)
    ok = ~flagged
    values[ok] = acc[ok] / weight[ok, None]
    if flagged.any():
        if nearest_covered is None:
            _, indices = distance_transform_edt(~uv_map.coverage, return_indices=True)
            nearest_covered = (indices[0], indices[1])
        jn = np.clip(np.rint(x[flagged]).astype(np.int64), 0, w - 1)
        in_ = np.clip(np.rint(y[flagged]).astype(np.int64), 0, h - 1)
        ni = nearest_covered[0][in_, jn]
        nj = nearest_covered[1][in_, jn]
        values[flagged] = data[ni, nj]
        logger.warning(f"{int(flagged.sum())} Abtastpunkte ohne abgedeckte Nachbartexel, nächster Texel verwendet")
    return values, flagged
