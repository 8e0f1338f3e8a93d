"""
Template Module

Dieses Modul definiert das semantische Template (Netz mit UV-Atlas, Skinning-Gewichten,
Gelenkhierarchie, kanonischer Pose und Körperteil-Labels), die Mittelpunkt-Unterteilung
mit geordnetem Downsampling sowie Linear Blend Skinning zum Posieren und Entposieren.

Die Vertexreihenfolge ist präfixstabil: die ersten base_counts[k]["vertices"] Einträge
jeder Unterteilungsstufe entsprechen exakt den Vertices der Stufe k.
"""

import os
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from core.mesh import Mesh, unique_edges, vertex_normals
from core.mesh_io import load_obj, save_obj
from core.utils import load_json, save_json, read_array, write_array

# Logger konfigurieren
logger = logging.getLogger(__name__)

DEFAULT_LABEL_NAMES = ["body", "face", "left-hand", "right-hand", "left-foot", "right-foot"]

# Toleranz für Orthonormalität der Gelenkrotationen
ROTATION_TOL = 1e-6

# Betrag der Determinante, unter dem eine gemischte Transformation als singulär gilt
SINGULAR_DET = 1e-9


@dataclass
class Pose:
    """Rotation pro Gelenk (J, 3, 3) und Translation der Wurzel in Metern."""
    rotations: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(-1, 3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        gram = np.einsum('jab,jac->jbc', self.rotations, self.rotations)
        deviation = np.abs(gram - np.eye(3)).max() if len(self.rotations) else 0.0
        if deviation > ROTATION_TOL:
            raise ValueError(f"Gelenkrotationen nicht orthonormal (Abweichung {deviation:.3g})")
        if len(self.rotations) and np.any(np.linalg.det(self.rotations) < 0):
            raise ValueError("Gelenkrotationen enthalten Spiegelungen")

    @property
    def joint_count(self) -> int:
        return len(self.rotations)

    @classmethod
    def identity(cls, joint_count: int) -> "Pose":
        return cls(np.tile(np.eye(3), (joint_count, 1, 1)), np.zeros(3))

    @classmethod
    def random(cls, joint_count: int, rng: np.random.Generator, max_angle: float = np.pi / 3,
               max_translation: float = 0.5) -> "Pose":
        """Zufällige Pose mit Drehwinkeln bis max_angle (Radiant) um zufällige Achsen."""
        axes = rng.normal(size=(joint_count, 3))
        axes /= np.linalg.norm(axes, axis=1, keepdims=True)
        angles = rng.uniform(0.0, max_angle, size=joint_count)
        rotations = Rotation.from_rotvec(axes * angles[:, None]).as_matrix()
        translation = rng.uniform(-max_translation, max_translation, size=3)
        return cls(rotations, translation)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], joint_count: Optional[int] = None) -> "Pose":
        """
        Liest eine Pose aus einem Dictionary.

        Unterstützte Schlüssel: "rotations" (3×3 zeilenweise pro Gelenk),
        "quaternions" (x, y, z, w pro Gelenk) oder "axis_angle" (Rotationsvektor pro Gelenk),
        dazu optional "translation".
        """
        translation = data.get("translation", [0.0, 0.0, 0.0])
        if "rotations" in data:
            rotations = np.asarray(data["rotations"], dtype=np.float64).reshape(-1, 3, 3)
        elif "quaternions" in data:
            rotations = Rotation.from_quat(np.asarray(data["quaternions"], dtype=np.float64)).as_matrix()
        elif "axis_angle" in data:
            rotations = Rotation.from_rotvec(np.asarray(data["axis_angle"], dtype=np.float64)).as_matrix()
        elif joint_count is not None:
            rotations = np.tile(np.eye(3), (joint_count, 1, 1))
        else:
            raise ValueError("Pose enthält weder 'rotations', 'quaternions' noch 'axis_angle'")
        pose = cls(rotations.reshape(-1, 3, 3), translation)
        if joint_count is not None and pose.joint_count != joint_count:
            raise ValueError(f"Pose hat {pose.joint_count} Gelenke, Template erwartet {joint_count}")
        return pose

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rotations": [[float(x) for x in r.reshape(-1)] for r in self.rotations],
            "translation": [float(x) for x in self.translation],
        }

    @classmethod
    def load(cls, file_path: str, joint_count: Optional[int] = None) -> "Pose":
        return cls.from_dict(load_json(file_path, required=True), joint_count)

    def save(self, file_path: str) -> None:
        if not save_json(self.to_dict(), file_path):
            raise OSError(f"Pose konnte nicht gespeichert werden: {file_path}")


class SemanticTemplate:
    """Semantisches Template: Netz, UV-Atlas pro Ecke, Skinning, Skelett, Labels und Unterteilungsstufen."""

    def __init__(self, mesh: Mesh, uv_positions, uv_faces, weights, joints, parents,
                 canonical_pose: Pose, part_labels, label_names: Optional[List[str]] = None,
                 subdivision_level: int = 0, base_counts: Optional[List[Dict[str, int]]] = None,
                 level_faces: Optional[List[np.ndarray]] = None, level_uv_faces: Optional[List[np.ndarray]] = None):
        """
        Initialisiert das Template und prüft seine Invarianten.

        Args:
            mesh: Netz in Ruhepose
            uv_positions: (U, 2) UV-Positionen in [0, 1]²
            uv_faces: (F, 3) UV-Indizes pro Fläche
            weights: (V, J) Skinning-Gewichte, Zeilen summieren zu 1
            joints: (J, 3) Gelenkpositionen in Ruhepose
            parents: (J,) Elternindex (-1 oder eigener Index für Wurzeln)
            canonical_pose: Kanonische Pose ("Stern"-Pose)
            part_labels: (V,) Label-Index pro Vertex
            label_names: Namen der Label-Indizes
            subdivision_level: Aktuelle Unterteilungsstufe
            base_counts: Anzahlen pro Stufe 0..subdivision_level
            level_faces, level_uv_faces: Flächenlisten der Stufen 0..subdivision_level-1

        Raises:
            ValueError: Bei verletzten Invarianten.
        """
        self.mesh = mesh
        self.uv_positions = np.asarray(uv_positions, dtype=np.float64).reshape(-1, 2)
        self.uv_faces = np.asarray(uv_faces, dtype=np.int64).reshape(-1, 3)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.joints = np.asarray(joints, dtype=np.float64).reshape(-1, 3)
        self.parents = np.asarray(parents, dtype=np.int64).reshape(-1)
        self.canonical_pose = canonical_pose
        self.part_labels = np.asarray(part_labels, dtype=np.int64).reshape(-1)
        self.label_names = list(label_names) if label_names is not None else list(DEFAULT_LABEL_NAMES)
        self.subdivision_level = int(subdivision_level)
        if base_counts is None:
            base_counts = [self._counts()]
        self.base_counts = [dict(c) for c in base_counts]
        self.level_faces = [np.asarray(f, dtype=np.int64) for f in (level_faces or [])]
        self.level_uv_faces = [np.asarray(f, dtype=np.int64) for f in (level_uv_faces or [])]
        self.validate()

    def _counts(self) -> Dict[str, int]:
        return {"vertices": self.mesh.vertex_count, "faces": self.mesh.face_count, "uvs": len(self.uv_positions)}

    def validate(self) -> None:
        v, j = self.mesh.vertex_count, len(self.joints)
        if len(self.uv_faces) != self.mesh.face_count:
            raise ValueError(f"{len(self.uv_faces)} UV-Flächen für {self.mesh.face_count} Flächen")
        if len(self.uv_faces) and (self.uv_faces.min() < 0 or self.uv_faces.max() >= len(self.uv_positions)):
            raise ValueError("UV-Index außerhalb des Bereichs")
        if self.weights.shape != (v, j):
            raise ValueError(f"Gewichtsmatrix hat Form {self.weights.shape}, erwartet {(v, j)}")
        if np.any(self.weights < 0):
            raise ValueError("Skinning-Gewichte dürfen nicht negativ sein")
        row_error = np.abs(self.weights.sum(axis=1) - 1.0)
        if v and row_error.max() > 1e-6:
            raise ValueError(f"Gewichtszeilen summieren nicht zu 1 (Abweichung {row_error.max():.3g})")
        if len(self.parents) != j:
            raise ValueError(f"{len(self.parents)} Elternindizes für {j} Gelenke")
        for k, p in enumerate(self.parents):
            if p >= 0 and p != k and p >= k:
                raise ValueError(f"Gelenk {k} hat Elternindex {p}; Eltern müssen vor ihren Kindern stehen")
        if self.canonical_pose.joint_count != j:
            raise ValueError(f"Kanonische Pose hat {self.canonical_pose.joint_count} Gelenke, erwartet {j}")
        if len(self.part_labels) != v:
            raise ValueError(f"{len(self.part_labels)} Labels für {v} Vertices")
        if v and (self.part_labels.min() < 0 or self.part_labels.max() >= len(self.label_names)):
            raise ValueError("Label-Index außerhalb der Label-Namen")
        if len(self.base_counts) != self.subdivision_level + 1:
            raise ValueError("base_counts muss einen Eintrag pro Stufe 0..subdivision_level enthalten")
        if self.base_counts[-1] != self._counts():
            raise ValueError(f"base_counts der aktuellen Stufe {self.base_counts[-1]} passt nicht zu {self._counts()}")
        if len(self.level_faces) != self.subdivision_level or len(self.level_uv_faces) != self.subdivision_level:
            raise ValueError("Für jede gröbere Stufe wird eine Flächenliste benötigt")

    @property
    def vertex_count(self) -> int:
        return self.mesh.vertex_count

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    def label_index(self, name: str) -> int:
        if name not in self.label_names:
            raise ValueError(f"Unbekanntes Körperteil-Label '{name}' (bekannt: {', '.join(self.label_names)})")
        return self.label_names.index(name)

    def label_mask(self, names) -> np.ndarray:
        """(V,) Maske der Vertices mit einem der angegebenen Labels."""
        indices = [self.label_index(n) for n in names]
        return np.isin(self.part_labels, indices)

    def with_positions(self, positions) -> "SemanticTemplate":
        """Gleiches Template mit neuen Ruhepositionen (z. B. einer deformierten Instanz)."""
        return SemanticTemplate(self.mesh.with_positions(positions), self.uv_positions, self.uv_faces,
                                self.weights, self.joints, self.parents, self.canonical_pose,
                                self.part_labels, self.label_names, self.subdivision_level,
                                self.base_counts, self.level_faces, self.level_uv_faces)

    def __str__(self) -> str:
        return (f"SemanticTemplate({self.vertex_count} Vertices, {self.mesh.face_count} Flächen, "
                f"{self.joint_count} Gelenke, Stufe {self.subdivision_level})")


# ----------------------------------------------------------------------
# Unterteilung und Downsampling
# ----------------------------------------------------------------------

def _midpoint_faces(faces: np.ndarray, mid_index: np.ndarray) -> np.ndarray:
    """Vier Teildreiecke pro Fläche; mid_index enthält (m_ab, m_bc, m_ca) pro Fläche."""
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    m_ab, m_bc, m_ca = mid_index[:, 0], mid_index[:, 1], mid_index[:, 2]
    children = np.stack([
        np.stack([a, m_ab, m_ca], axis=1),
        np.stack([m_ab, b, m_bc], axis=1),
        np.stack([m_ca, m_bc, c], axis=1),
        np.stack([m_ab, m_bc, m_ca], axis=1),
    ], axis=1)
    return children.reshape(-1, 3)


def subdivide_midpoint(tmpl: SemanticTemplate) -> SemanticTemplate:
    """
    Eine Stufe Mittelpunkt-Unterteilung.

    Neue Vertices folgen den alten in kanonischer Kantenreihenfolge (sortierte
    (min, max)-Paare, lexikographisch). Gewichte neuer Vertices sind der Mittelwert
    der beiden Endpunkte, das Label stammt vom Endpunkt mit kleinerem Index. UV-Mittelpunkte
    werden pro UV-Kante gebildet, so dass Nähte getrennte UV-Positionen erhalten.

    Raises:
        ValueError: Wenn eine Kante von mehr als zwei Flächen verwendet wird.
    """
    mesh = tmpl.mesh
    edges, face_edges = unique_edges(mesh.faces)
    usage = np.bincount(face_edges.reshape(-1), minlength=len(edges))
    if np.any(usage > 2):
        bad = edges[np.argmax(usage)]
        raise ValueError(f"Nicht-mannigfaltige Kante ({bad[0]}, {bad[1]}) wird von {usage.max()} Flächen verwendet")

    v = mesh.vertex_count
    positions = np.concatenate([mesh.positions, 0.5 * (mesh.positions[edges[:, 0]] + mesh.positions[edges[:, 1]])])
    faces = _midpoint_faces(mesh.faces, v + face_edges)
    colors = None
    if mesh.colors is not None:
        colors = np.concatenate([mesh.colors, 0.5 * (mesh.colors[edges[:, 0]] + mesh.colors[edges[:, 1]])])

    uv_edges, uv_face_edges = unique_edges(tmpl.uv_faces)
    u = len(tmpl.uv_positions)
    uv_positions = np.concatenate([tmpl.uv_positions,
                                   0.5 * (tmpl.uv_positions[uv_edges[:, 0]] + tmpl.uv_positions[uv_edges[:, 1]])])
    uv_faces = _midpoint_faces(tmpl.uv_faces, u + uv_face_edges)

    weights = np.concatenate([tmpl.weights, 0.5 * (tmpl.weights[edges[:, 0]] + tmpl.weights[edges[:, 1]])])
    labels = np.concatenate([tmpl.part_labels, tmpl.part_labels[edges[:, 0]]])

    new_mesh = Mesh(positions, faces, colors)
    counts = list(tmpl.base_counts) + [{"vertices": new_mesh.vertex_count, "faces": new_mesh.face_count,
                                        "uvs": len(uv_positions)}]
    logger.info(f"Mittelpunkt-Unterteilung: {v} -> {new_mesh.vertex_count} Vertices, "
                f"{mesh.face_count} -> {new_mesh.face_count} Flächen")
    return SemanticTemplate(new_mesh, uv_positions, uv_faces, weights, tmpl.joints, tmpl.parents,
                            tmpl.canonical_pose, labels, tmpl.label_names, tmpl.subdivision_level + 1,
                            counts, tmpl.level_faces + [mesh.faces.copy()],
                            tmpl.level_uv_faces + [tmpl.uv_faces.copy()])


def downsample(tmpl: SemanticTemplate, level: int, positions=None) -> SemanticTemplate:
    """
    Reduziert ein Template (oder eine deformierte Instanz) auf eine gröbere Stufe.

    Es wird nicht interpoliert: die ersten base_counts[level] Vertices werden mit der
    gespeicherten Flächenliste dieser Stufe übernommen.

    Args:
        tmpl: Template der aktuellen Stufe
        level: Zielstufe, 0 <= level <= subdivision_level
        positions: Optional (V, 3) Positionen einer deformierten Instanz

    Raises:
        ValueError: Wenn level außerhalb des Bereichs liegt.
    """
    if not 0 <= level <= tmpl.subdivision_level:
        raise ValueError(f"Stufe {level} außerhalb von [0, {tmpl.subdivision_level}]")
    source = tmpl.mesh.positions if positions is None else np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if len(source) != tmpl.vertex_count:
        raise ValueError(f"Instanz hat {len(source)} Vertices, Template {tmpl.vertex_count}")
    if level == tmpl.subdivision_level:
        return tmpl.with_positions(source) if positions is not None else tmpl
    counts = tmpl.base_counts[level]
    n_v, n_uv = counts["vertices"], counts["uvs"]
    colors = None if tmpl.mesh.colors is None else tmpl.mesh.colors[:n_v]
    mesh = Mesh(source[:n_v].copy(), tmpl.level_faces[level], colors)
    return SemanticTemplate(mesh, tmpl.uv_positions[:n_uv], tmpl.level_uv_faces[level], tmpl.weights[:n_v],
                            tmpl.joints, tmpl.parents, tmpl.canonical_pose, tmpl.part_labels[:n_v],
                            tmpl.label_names, level, tmpl.base_counts[:level + 1],
                            tmpl.level_faces[:level], tmpl.level_uv_faces[:level])


# ----------------------------------------------------------------------
# Linear Blend Skinning
# ----------------------------------------------------------------------

def _is_root(parents: np.ndarray, j: int) -> bool:
    return parents[j] < 0 or parents[j] == j


def joint_transforms(joints: np.ndarray, parents: np.ndarray, pose: Pose) -> np.ndarray:
    """
    Vorwärtskinematik: (J, 4, 4) Transformationen relativ zur Ruhepose.

    Ein Punkt der Ruhepose, der starr an Gelenk j hängt, wird durch A_j in die Pose überführt.
    """
    n = len(joints)
    if pose.joint_count != n:
        raise ValueError(f"Pose hat {pose.joint_count} Gelenke, Skelett {n}")
    world = np.zeros((n, 4, 4))
    relative = np.zeros((n, 4, 4))
    for j in range(n):
        local = np.eye(4)
        local[:3, :3] = pose.rotations[j]
        if _is_root(parents, j):
            local[:3, 3] = joints[j] + pose.translation
            world[j] = local
        else:
            local[:3, 3] = joints[j] - joints[parents[j]]
            world[j] = world[parents[j]] @ local
        unbind = np.eye(4)
        unbind[:3, 3] = -joints[j]
        relative[j] = world[j] @ unbind
    return relative


def posed_joints(tmpl: SemanticTemplate, pose: Pose) -> np.ndarray:
    """(J, 3) Gelenkpositionen in der gegebenen Pose."""
    transforms = joint_transforms(tmpl.joints, tmpl.parents, pose)
    return np.einsum('jab,jb->ja', transforms[:, :3, :3], tmpl.joints) + transforms[:, :3, 3]


def _blended(tmpl: SemanticTemplate, vertices: np.ndarray, pose: Pose) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    if len(vertices) != tmpl.weights.shape[0]:
        raise ValueError(f"{len(vertices)} Vertices, aber {tmpl.weights.shape[0]} Gewichtszeilen")
    if tmpl.weights.shape[1] != pose.joint_count:
        raise ValueError(f"Gewichte für {tmpl.weights.shape[1]} Gelenke, Pose hat {pose.joint_count}")
    transforms = joint_transforms(tmpl.joints, tmpl.parents, pose)
    linear = np.einsum('vj,jab->vab', tmpl.weights, transforms[:, :3, :3])
    offset = tmpl.weights @ transforms[:, :3, 3]
    return vertices, linear, offset


def lbs_pose(tmpl: SemanticTemplate, vertices, pose: Pose) -> np.ndarray:
    """
    Posiert Vertices der Ruhepose: v' = (Σ_j w_vj · A_j) v.

    Raises:
        ValueError: Wenn Vertexanzahl oder Gelenkanzahl nicht zu den Gewichten passen.
    """
    vertices, linear, offset = _blended(tmpl, vertices, pose)
    return np.einsum('vab,vb->va', linear, vertices) + offset


def lbs_unpose(tmpl: SemanticTemplate, vertices, pose: Pose) -> Tuple[np.ndarray, np.ndarray]:
    """
    Wendet pro Vertex die Inverse der gemischten Transformation an.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (V, 3) Positionen der Ruhepose und (V,) Flag
        für nahezu singuläre Mischungen (diese Vertices bleiben unverändert).
    """
    vertices, linear, offset = _blended(tmpl, vertices, pose)
    det = np.linalg.det(linear)
    flagged = np.abs(det) <= SINGULAR_DET
    result = vertices.copy()
    ok = ~flagged
    if ok.any():
        result[ok] = np.linalg.solve(linear[ok], (vertices[ok] - offset[ok])[:, :, None])[:, :, 0]
    if flagged.any():
        logger.warning(f"{int(flagged.sum())} Vertices mit nahezu singulärer Skinning-Transformation")
    return result, flagged


def lbs_repose(tmpl: SemanticTemplate, vertices, from_pose: Pose, to_pose: Pose) -> Tuple[np.ndarray, np.ndarray]:
    """Überführt Vertices von einer Pose in eine andere (Entposieren, dann Posieren)."""
    rest, flagged = lbs_unpose(tmpl, vertices, from_pose)
    return lbs_pose(tmpl, rest, to_pose), flagged


def template_normals(tmpl: SemanticTemplate, positions) -> Tuple[np.ndarray, np.ndarray]:
    """Vertexnormalen der Template-Konnektivität für beliebige Positionen."""
    return vertex_normals(tmpl.mesh.with_positions(positions))


# ----------------------------------------------------------------------
# Manifest
# ----------------------------------------------------------------------

def save_template(tmpl: SemanticTemplate, manifest_path: str) -> None:
    """
    Speichert das Template als JSON-Manifest mit OBJ und Binär-Sidecars.

    Sidecars: Gewichte float32 (V×J), Gelenke float64 (J×3), Eltern int32, Labels uint8,
    kanonische Pose float64 (J·9 Rotationen + 3 Translation), Flächenlisten der gröberen
    Stufen int32.
    """
    directory = os.path.dirname(os.path.abspath(manifest_path))
    stem = os.path.splitext(os.path.basename(manifest_path))[0]

    def side(name: str) -> str:
        return f"{stem}.{name}"

    save_obj(os.path.join(directory, side("obj")), tmpl.mesh, tmpl.uv_positions, tmpl.uv_faces)
    write_array(os.path.join(directory, side("weights.bin")), tmpl.weights, 'f4')
    write_array(os.path.join(directory, side("joints.bin")), tmpl.joints, 'f8')
    write_array(os.path.join(directory, side("parents.bin")), tmpl.parents, 'i4')
    write_array(os.path.join(directory, side("labels.bin")), tmpl.part_labels, 'u1')
    pose = tmpl.canonical_pose
    write_array(os.path.join(directory, side("canonical_pose.bin")),
                np.concatenate([pose.rotations.reshape(-1), pose.translation]), 'f8')
    levels = []
    for k in range(tmpl.subdivision_level):
        write_array(os.path.join(directory, side(f"level{k}.faces.bin")), tmpl.level_faces[k], 'i4')
        write_array(os.path.join(directory, side(f"level{k}.uv_faces.bin")), tmpl.level_uv_faces[k], 'i4')
        levels.append({"faces": side(f"level{k}.faces.bin"), "uv_faces": side(f"level{k}.uv_faces.bin")})

    manifest = {
        "format": "semreg-template",
        "version": 1,
        "mesh": side("obj"),
        "vertex_count": tmpl.vertex_count,
        "joint_count": tmpl.joint_count,
        "weights": side("weights.bin"),
        "joints": side("joints.bin"),
        "parents": side("parents.bin"),
        "labels": side("labels.bin"),
        "label_names": tmpl.label_names,
        "canonical_pose": side("canonical_pose.bin"),
        "subdivision_level": tmpl.subdivision_level,
        "base_counts": tmpl.base_counts,
        "levels": levels,
    }
    if not save_json(manifest, manifest_path):
        raise OSError(f"Template-Manifest konnte nicht geschrieben werden: {manifest_path}")
    logger.info(f"Template gespeichert: {manifest_path} ({tmpl})")


def load_template(manifest_path: str) -> SemanticTemplate:
    """
    Lädt ein Template aus seinem JSON-Manifest.

    Gewichtszeilen werden nach dem Laden (float32) auf Summe 1 renormiert.

    Raises:
        FileNotFoundError: Wenn Manifest oder Sidecars fehlen.
        ValueError: Bei inkonsistenten Daten.
    """
    manifest = load_json(manifest_path, required=True)
    if manifest.get("format") != "semreg-template":
        raise ValueError(f"'{manifest_path}' ist kein Template-Manifest")
    directory = os.path.dirname(os.path.abspath(manifest_path))

    def path(key: str) -> str:
        return os.path.join(directory, manifest[key])

    mesh, uv_positions, uv_faces = load_obj(path("mesh"))
    if uv_positions is None:
        raise ValueError(f"Template-Netz '{manifest['mesh']}' enthält keine UV-Koordinaten")
    v, j = int(manifest["vertex_count"]), int(manifest["joint_count"])
    if mesh.vertex_count != v:
        raise ValueError(f"Template-Netz hat {mesh.vertex_count} Vertices, Manifest nennt {v}")
    weights = read_array(path("weights"), 'f4', (v, j)).astype(np.float64)
    weights /= weights.sum(axis=1, keepdims=True)
    joints = read_array(path("joints"), 'f8', (j, 3))
    parents = read_array(path("parents"), 'i4', (j,))
    labels = read_array(path("labels"), 'u1', (v,))
    pose_raw = read_array(path("canonical_pose"), 'f8', (j * 9 + 3,))
    canonical = Pose(pose_raw[:j * 9].reshape(j, 3, 3), pose_raw[j * 9:])
    base_counts = manifest["base_counts"]
    level_faces, level_uv_faces = [], []
    for k, entry in enumerate(manifest.get("levels", [])):
        n_faces = int(base_counts[k]["faces"])
        level_faces.append(read_array(os.path.join(directory, entry["faces"]), 'i4', (n_faces, 3)))
        level_uv_faces.append(read_array(os.path.join(directory, entry["uv_faces"]), 'i4', (n_faces, 3)))
    tmpl = SemanticTemplate(mesh, uv_positions, uv_faces, weights, joints, parents, canonical, labels,
                            manifest.get("label_names"), int(manifest["subdivision_level"]), base_counts,
                            level_faces, level_uv_faces)
    logger.info(f"Template geladen: {manifest_path} ({tmpl})")
    return tmpl
