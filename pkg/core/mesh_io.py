"""
Mesh IO Module

Dieses Modul liest und schreibt Dreiecksnetze als OBJ (v/vt/f mit 1-basierten Indizes)
und als binäres PLY mit optionalen Vertexfarben. Beide Writer erzeugen für identische
Eingaben byte-identische Dateien.
"""

import os
import io
import logging
from typing import Optional, Tuple

import numpy as np
import trimesh

from core.mesh import Mesh

# Logger konfigurieren
logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.12g'


def _ensure_parent(file_path: str) -> None:
    directory = os.path.dirname(file_path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def _fmt(values) -> str:
    return ' '.join(FLOAT_FORMAT % float(v) for v in values)


def save_obj(file_path: str, mesh: Mesh, uv_positions: Optional[np.ndarray] = None,
             uv_faces: Optional[np.ndarray] = None) -> None:
    """
    Schreibt ein Netz als OBJ.

    Args:
        file_path: Zielpfad
        mesh: Netz (Vertexfarben werden als "v x y z r g b" geschrieben)
        uv_positions: Optionale (U, 2) UV-Positionen
        uv_faces: Optionale (F, 3) UV-Indizes pro Fläche
    """
    if (uv_positions is None) != (uv_faces is None):
        raise ValueError("uv_positions und uv_faces müssen gemeinsam angegeben werden")
    if uv_faces is not None and len(uv_faces) != mesh.face_count:
        raise ValueError(f"{len(uv_faces)} UV-Flächen für {mesh.face_count} Flächen")
    _ensure_parent(file_path)
    buffer = io.StringIO()
    buffer.write(f"# {mesh.vertex_count} vertices, {mesh.face_count} faces\n")
    for k, p in enumerate(mesh.positions):
        if mesh.colors is not None:
            buffer.write(f"v {_fmt(p)} {_fmt(mesh.colors[k])}\n")
        else:
            buffer.write(f"v {_fmt(p)}\n")
    if uv_positions is not None:
        for uv in np.asarray(uv_positions, dtype=np.float64):
            buffer.write(f"vt {_fmt(uv)}\n")
        for f, t in zip(mesh.faces + 1, np.asarray(uv_faces, dtype=np.int64) + 1):
            buffer.write(f"f {f[0]}/{t[0]} {f[1]}/{t[1]} {f[2]}/{t[2]}\n")
    else:
        for f in mesh.faces + 1:
            buffer.write(f"f {f[0]} {f[1]} {f[2]}\n")
    with open(file_path, 'w', encoding='utf-8', newline='\n') as out:
        out.write(buffer.getvalue())
    logger.debug(f"OBJ gespeichert: {file_path} ({mesh})")


def load_obj(file_path: str) -> Tuple[Mesh, Optional[np.ndarray], Optional[np.ndarray]]:
    """
    Lädt ein OBJ mit Dreiecksflächen. Die Vertexreihenfolge der Datei bleibt erhalten.

    Returns:
        Tuple: (Mesh, UV-Positionen oder None, UV-Flächen oder None)

    Raises:
        FileNotFoundError: Wenn die Datei fehlt.
        OSError: Bei Nicht-Dreiecksflächen oder unlesbaren Zeilen.
    """
    if not os.path.exists(file_path):
        raise FileNotFoundError(f"OBJ-Datei nicht gefunden: {file_path}")
    positions, colors, uvs, faces, uv_faces = [], [], [], [], []
    with open(file_path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.split()
            if not parts or parts[0].startswith('#'):
                continue
            try:
                if parts[0] == 'v':
                    positions.append([float(x) for x in parts[1:4]])
                    if len(parts) >= 7:
                        colors.append([float(x) for x in parts[4:7]])
                elif parts[0] == 'vt':
                    uvs.append([float(x) for x in parts[1:3]])
                elif parts[0] == 'f':
                    corners = parts[1:]
                    if len(corners) != 3:
                        raise OSError(f"{file_path}:{line_no}: nur Dreiecke werden unterstützt")
                    fv, ft = [], []
                    for c in corners:
                        fields = c.split('/')
                        fv.append(int(fields[0]) - 1)
                        if len(fields) > 1 and fields[1]:
                            ft.append(int(fields[1]) - 1)
                    faces.append(fv)
                    if len(ft) == 3:
                        uv_faces.append(ft)
            except ValueError as e:
                raise OSError(f"{file_path}:{line_no}: unlesbare Zeile ({e})") from e

    color_array = None
    if colors:
        if len(colors) != len(positions):
            logger.warning(f"{file_path}: Farben nur für einen Teil der Vertices, Farben verworfen")
        else:
            color_array = np.array(colors)
    mesh = Mesh(np.array(positions).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3), color_array)
    uv_positions = uv_face_array = None
    if uvs and len(uv_faces) == len(faces):
        uv_positions = np.array(uvs).reshape(-1, 2)
        uv_face_array = np.array(uv_faces, dtype=np.int64).reshape(-1, 3)
    logger.debug(f"OBJ geladen: {file_path} ({mesh})")
    return mesh, uv_positions, uv_face_array


def save_ply(file_path: str, mesh: Mesh) -> None:
    """Schreibt ein binäres PLY (Little Endian) mit optionalen Farben red/green/blue."""
    _ensure_parent(file_path)
    header = ["ply", "format binary_little_endian 1.0",
              f"element vertex {mesh.vertex_count}",
              "property double x", "property double y", "property double z"]
    fields = [('x', '<f8'), ('y', '<f8'), ('z', '<f8')]
    if mesh.colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
        fields += [('red', 'u1'), ('green', 'u1'), ('blue', 'u1')]
    header += [f"element face {mesh.face_count}", "property list uchar int vertex_indices", "end_header"]

    vertices = np.zeros(mesh.vertex_count, dtype=fields)
    vertices['x'], vertices['y'], vertices['z'] = mesh.positions.T
    if mesh.colors is not None:
        rgb = np.clip(np.rint(mesh.colors * 255.0), 0, 255).astype(np.uint8)
        vertices['red'], vertices['green'], vertices['blue'] = rgb.T
    face_records = np.zeros(mesh.face_count, dtype=[('n', 'u1'), ('v', '<i4', (3,))])
    face_records['n'] = 3
    face_records['v'] = mesh.faces

    with open(file_path, 'wb') as f:
        f.write(('\n'.join(header) + '\n').encode('ascii'))
        f.write(vertices.tobytes())
        f.write(face_records.tobytes())
    logger.debug(f"PLY gespeichert: {file_path} ({mesh})")


def load_ply(file_path: str) -> Mesh:
    """
    Lädt ein PLY über trimesh, ohne Vertices zusammenzuführen oder umzusortieren.

    Vertexfarben werden übernommen, wenn die Datei welche enthält.
    """
    if not os.path.exists(file_path):
        raise FileNotFoundError(f"PLY-Datei nicht gefunden: {file_path}")
    loaded = trimesh.load(file_path, force='mesh', process=False)
    colors = None
    visual = getattr(loaded, 'visual', None)
    if visual is not None and getattr(visual, 'kind', None) == 'vertex':
        colors = np.asarray(visual.vertex_colors, dtype=np.float64)[:, :3] / 255.0
    faces = np.asarray(getattr(loaded, 'faces', np.zeros((0, 3))), dtype=np.int64)
    mesh = Mesh(np.asarray(loaded.vertices, dtype=np.float64), faces, colors)
    logger.debug(f"PLY geladen: {file_path} ({mesh})")
    return mesh


def load_mesh(file_path: str) -> Mesh:
    """Lädt ein Netz anhand der Dateiendung (.obj oder .ply)."""
    ext = os.path.splitext(file_path)[1].lower()
    if ext == '.obj':
        return load_obj(file_path)[0]
    if ext == '.ply':
        return load_ply(file_path)
    raise ValueError(f"Nicht unterstütztes Netzformat: {ext}")


def save_mesh(file_path: str, mesh: Mesh, uv_positions=None, uv_faces=None) -> None:
    """Speichert ein Netz anhand der Dateiendung (.obj oder .ply)."""
    ext = os.path.splitext(file_path)[1].lower()
    if ext == '.obj':
        save_obj(file_path, mesh, uv_positions, uv_faces)
    elif ext == '.ply':
        save_ply(file_path, mesh)
    else:
        raise ValueError(f"Nicht unterstütztes Netzformat: {ext}")


def to_trimesh(mesh: Mesh) -> trimesh.Trimesh:
    """Wandelt ein Netz verlustfrei (ohne Verarbeitung) in ein trimesh.Trimesh um."""
    colors = None
    if mesh.colors is not None:
        colors = np.clip(np.rint(mesh.colors * 255.0), 0, 255).astype(np.uint8)
    return trimesh.Trimesh(vertices=mesh.positions, faces=mesh.faces, vertex_colors=colors, process=False)


def from_trimesh(tm: trimesh.Trimesh) -> Mesh:
    """Übernimmt Vertices und Flächen eines trimesh.Trimesh ohne Umsortierung."""
    return Mesh(np.asarray(tm.vertices, dtype=np.float64), np.asarray(tm.faces, dtype=np.int64))
