"""
Camera Module

Dieses Modul beschreibt orthographische und Lochkamera-Modelle, die Projektion von
Weltpunkten in Pixelkoordinaten und das bilineare Abtasten von Bildern.

Konventionen: x_cam = R·x + t, die Kamera blickt entlang −z, Tiefe = −z_cam.
Pixelkoordinaten laufen von der linken oberen Bildecke; das Zentrum von Pixel
(Zeile i, Spalte j) liegt bei (j + 0.5, i + 0.5).
"""

import logging
from typing import Any, Dict, Tuple

import numpy as np
from scipy.ndimage import map_coordinates

from core.utils import load_json, save_json

# Logger konfigurieren
logger = logging.getLogger(__name__)

CAMERA_KINDS = ("orthographic", "pinhole")


class Camera:
    """Kameramodell mit Extrinsik (Rotation, Translation) und Intrinsik."""

    def __init__(self, kind: str, rotation, translation, width: int, height: int,
                 scale: float = 1.0, focal=(1.0, 1.0), principal=None):
        """
        Args:
            kind: "orthographic" oder "pinhole"
            rotation: 3×3 Rotation Welt -> Kamera
            translation: Translation in Metern
            width, height: Bildgröße in Pixeln
            scale: Pixel pro Meter (orthographisch)
            focal: (fx, fy) in Pixeln (Lochkamera)
            principal: (cx, cy) in Pixeln, Standard Bildmitte

        Raises:
            ValueError: Bei unbekannter Art, nicht-orthonormaler Rotation oder ungültiger Größe.
        """
        if kind not in CAMERA_KINDS:
            raise ValueError(f"Unbekannte Kameraart '{kind}' (erlaubt: {', '.join(CAMERA_KINDS)})")
        self.kind = kind
        self.rotation = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
        if np.abs(self.rotation.T @ self.rotation - np.eye(3)).max() > 1e-6:
            raise ValueError("Kamerarotation ist nicht orthonormal")
        self.translation = np.asarray(translation, dtype=np.float64).reshape(3)
        self.width = int(width)
        self.height = int(height)
        if self.width < 1 or self.height < 1:
            raise ValueError(f"Ungültige Bildgröße {self.width}x{self.height}")
        self.scale = float(scale)
        focal = np.broadcast_to(np.asarray(focal, dtype=np.float64), (2,))
        self.focal = focal.copy()
        if principal is None:
            principal = (self.width / 2.0, self.height / 2.0)
        self.principal = np.asarray(principal, dtype=np.float64).reshape(2)
        if kind == "orthographic" and self.scale <= 0:
            raise ValueError("Orthographischer Maßstab muss positiv sein")
        if kind == "pinhole" and np.any(self.focal <= 0):
            raise ValueError("Brennweite muss positiv sein")

    # ------------------------------------------------------------------
    # Projektion
    # ------------------------------------------------------------------

    def to_camera(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return points @ self.rotation.T + self.translation

    def project(self, points) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Projiziert Weltpunkte.

        Orthographisch gibt es keine Bildebene als Schranke: alle Punkte gelten als
        "vor der Kamera", die Tiefe darf negativ sein und ordnet weiterhin.

        Returns:
            Tuple: (N, 2) Pixelkoordinaten (x, y), (N,) Tiefe, (N,) Flag "vor der Kamera"
        """
        cam = self.to_camera(points)
        depth = -cam[:, 2]
        if self.kind == "orthographic":
            in_front = np.ones(len(cam), dtype=bool)
            px = self.scale * cam[:, 0] + self.width / 2.0
            py = self.height / 2.0 - self.scale * cam[:, 1]
        else:
            in_front = depth > 0
            safe = np.where(in_front, depth, 1.0)
            px = self.focal[0] * cam[:, 0] / safe + self.principal[0]
            py = self.principal[1] - self.focal[1] * cam[:, 1] / safe
        return np.stack([px, py], axis=1), depth, in_front

    def in_frame(self, pixels) -> np.ndarray:
        pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
        return ((pixels[:, 0] >= 0) & (pixels[:, 0] < self.width)
                & (pixels[:, 1] >= 0) & (pixels[:, 1] < self.height))

    @property
    def center(self) -> np.ndarray:
        """Kamerazentrum in Weltkoordinaten."""
        return -self.rotation.T @ self.translation

    @property
    def view_direction(self) -> np.ndarray:
        """Blickrichtung in Weltkoordinaten (−z der Kamera)."""
        return self.rotation.T @ np.array([0.0, 0.0, -1.0])

    def directions_to_camera(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """
        Einheitsrichtungen von Weltpunkten zur Kamera und maximale Strahllänge.

        Orthographisch ist die Richtung überall −Blickrichtung und unbegrenzt,
        bei der Lochkamera zeigt sie zum Zentrum und endet dort.
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if self.kind == "orthographic":
            directions = np.tile(-self.view_direction, (len(points), 1))
            return directions, np.full(len(points), np.inf)
        offset = self.center - points
        dist = np.linalg.norm(offset, axis=1)
        directions = offset / np.maximum(dist, 1e-300)[:, None]
        return directions, dist

    # ------------------------------------------------------------------
    # Serialisierung
    # ------------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Camera":
        size = data.get("image_size", [data.get("width"), data.get("height")])
        if size[0] is None or size[1] is None:
            raise ValueError("Kamera ohne Bildgröße (width/height oder image_size)")
        return cls(kind=data.get("kind", "orthographic"),
                   rotation=data.get("rotation", np.eye(3).reshape(-1).tolist()),
                   translation=data.get("translation", [0.0, 0.0, 0.0]),
                   width=int(size[0]), height=int(size[1]),
                   scale=float(data.get("scale", 1.0)),
                   focal=data.get("focal", [1.0, 1.0]),
                   principal=data.get("principal"))

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "kind": self.kind,
            "rotation": [float(x) for x in self.rotation.reshape(-1)],
            "translation": [float(x) for x in self.translation],
            "image_size": [self.width, self.height],
        }
        if self.kind == "orthographic":
            data["scale"] = self.scale
        else:
            data["focal"] = [float(x) for x in self.focal]
            data["principal"] = [float(x) for x in self.principal]
        return data

    @classmethod
    def load(cls, file_path: str) -> "Camera":
        return cls.from_dict(load_json(file_path, required=True))

    def save(self, file_path: str) -> None:
        if not save_json(self.to_dict(), file_path):
            raise OSError(f"Kamera konnte nicht gespeichert werden: {file_path}")

    def __str__(self) -> str:
        return f"Camera({self.kind}, {self.width}x{self.height})"


def orthographic_view(center, distance: float, scale: float, width: int, height: int,
                      back: bool = False) -> Camera:
    """
    Orthographische Kamera, die entlang −z (oder von hinten entlang +z) auf center blickt.

    Args:
        center: Zielpunkt in Weltkoordinaten
        distance: Abstand der Bildebene vor dem Zielpunkt
        scale: Pixel pro Meter
        width, height: Bildgröße
        back: Rückansicht (Drehung um 180° um y)
    """
    rotation = np.diag([-1.0, 1.0, -1.0]) if back else np.eye(3)
    translation = -rotation @ np.asarray(center, dtype=np.float64) + np.array([0.0, 0.0, -float(distance)])
    return Camera("orthographic", rotation, translation, width, height, scale=scale)


def sample_image(image: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    """
    Bilineares Abtasten eines H×W×C Bildes an Pixelkoordinaten (Zentren bei +0.5).

    Returns:
        np.ndarray: (N, C) Werte; am Bildrand wird geklemmt
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    coords = np.stack([pixels[:, 1] - 0.5, pixels[:, 0] - 0.5])
    return np.stack([map_coordinates(image[:, :, c], coords, order=1, mode='nearest')
                     for c in range(image.shape[2])], axis=1)
