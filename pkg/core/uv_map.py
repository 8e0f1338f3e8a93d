"""
UV Map Module

Dieses Modul definiert das Rasterformat im UV-Raum (Positionskarten, Normalenkarten,
Verschiebungsfelder, Texturen, Lochmasken) sowie dessen Dateiformate.

Konvention: Texel (Zeile i, Spalte j) hat das Zentrum u = (j + 0.5) / W,
v = 1 − (i + 0.5) / H. Zeile 0 liegt oben, v zeigt nach oben.

.uvm-Format (Little Endian): 4 Bytes Magic "UVM1", 3 × int32 (H, W, C),
H·W·C float32 zeilenweise, danach H·W Bytes Abdeckung (0/1).
"""

import os
import logging
import struct
from typing import Optional, Tuple

import numpy as np
from PIL import Image

# Logger konfigurieren
logger = logging.getLogger(__name__)

UVM_MAGIC = b"UVM1"


def parse_resolution(resolution) -> Tuple[int, int]:
    """Wandelt eine Auflösung (int oder (H, W)) in ein (H, W)-Tupel um."""
    if isinstance(resolution, (tuple, list)):
        h, w = int(resolution[0]), int(resolution[1])
    else:
        h = w = int(resolution)
    if h < 1 or w < 1:
        raise ValueError(f"Ungültige UV-Auflösung {resolution}")
    return h, w


def texel_centers(height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    """(H, W) Gitter der Texelzentren in UV-Koordinaten."""
    u = (np.arange(width) + 0.5) / width
    v = 1.0 - (np.arange(height) + 0.5) / height
    uu, vv = np.meshgrid(u, v)
    return uu, vv


def uv_to_pixel(uv: np.ndarray, height: int, width: int) -> np.ndarray:
    """
    Rechnet UV-Koordinaten in kontinuierliche Texelkoordinaten (x = Spalte, y = Zeile) um,
    so dass das Zentrum von Texel (i, j) bei (j, i) liegt.
    """
    uv = np.asarray(uv, dtype=np.float64)
    x = uv[..., 0] * width - 0.5
    y = (1.0 - uv[..., 1]) * height - 0.5
    return np.stack([x, y], axis=-1)


class UvMap:
    """H×W×C float32 Raster mit Abdeckungsmaske; außerhalb der Abdeckung ist data = 0."""

    def __init__(self, data, coverage=None):
        data = np.asarray(data, dtype=np.float32)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ValueError(f"UvMap erwartet ein H×W×C Array, erhalten {data.shape}")
        if coverage is None:
            coverage = np.ones(data.shape[:2], dtype=bool)
        coverage = np.asarray(coverage, dtype=bool)
        if coverage.shape != data.shape[:2]:
            raise ValueError(f"Abdeckung {coverage.shape} passt nicht zu Daten {data.shape[:2]}")
        self.data = np.where(coverage[:, :, None], data, np.float32(0.0)).astype(np.float32)
        self.coverage = coverage.copy()

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    @classmethod
    def zeros(cls, height: int, width: int, channels: int, coverage=None) -> "UvMap":
        return cls(np.zeros((height, width, channels), dtype=np.float32), coverage)

    @classmethod
    def from_mask(cls, mask, coverage=None) -> "UvMap":
        """Erzeugt eine binäre Einkanal-Maske (1 = gesetzt), beschnitten auf die Abdeckung."""
        mask = np.asarray(mask, dtype=bool)
        if coverage is not None:
            mask = mask & np.asarray(coverage, dtype=bool)
        return cls(mask.astype(np.float32)[:, :, None], coverage)

    @property
    def mask(self) -> np.ndarray:
        """Boolesche Sicht auf eine Einkanal-Maske."""
        return (self.data[:, :, 0] > 0.5) & self.coverage

    def channel(self, start: int, stop: Optional[int] = None) -> "UvMap":
        """Teilkarte der Kanäle [start, stop)."""
        stop = start + 1 if stop is None else stop
        return UvMap(self.data[:, :, start:stop], self.coverage)

    def with_data(self, data) -> "UvMap":
        return UvMap(data, self.coverage)

    def require_same_grid(self, other: "UvMap", what: str = "UV-Karten") -> None:
        if self.shape != other.shape:
            raise ValueError(f"{what} haben unterschiedliche Auflösungen: {self.shape} vs {other.shape}")

    def save(self, file_path: str) -> None:
        """Schreibt die Karte im .uvm-Format."""
        directory = os.path.dirname(file_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(file_path, 'wb') as f:
            f.write(UVM_MAGIC)
            f.write(struct.pack('<3i', self.height, self.width, self.channels))
            f.write(self.data.astype('<f4').tobytes(order='C'))
            f.write(self.coverage.astype(np.uint8).tobytes(order='C'))
        logger.debug(f"UV-Karte {self.height}x{self.width}x{self.channels} gespeichert: {file_path}")

    @classmethod
    def load(cls, file_path: str) -> "UvMap":
        """
        Lädt eine Karte im .uvm-Format.

        Raises:
            FileNotFoundError: Wenn die Datei fehlt.
            OSError: Bei falschem Magic oder falscher Länge.
        """
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"UV-Karte nicht gefunden: {file_path}")
        with open(file_path, 'rb') as f:
            raw = f.read()
        if raw[:4] != UVM_MAGIC:
            raise OSError(f"Keine UVM1-Datei: {file_path}")
        h, w, c = struct.unpack_from('<3i', raw, 4)
        n_data = h * w * c * 4
        if len(raw) != 16 + n_data + h * w:
            raise OSError(f"UV-Karte {file_path} hat eine unerwartete Länge")
        data = np.frombuffer(raw, dtype='<f4', count=h * w * c, offset=16).reshape(h, w, c)
        coverage = np.frombuffer(raw, dtype=np.uint8, count=h * w, offset=16 + n_data).reshape(h, w) > 0
        return cls(data.astype(np.float32), coverage)

    def __str__(self) -> str:
        return f"UvMap({self.height}x{self.width}x{self.channels}, {int(self.coverage.sum())} Texel abgedeckt)"


def save_mask_png(mask, file_path: str) -> None:
    """Speichert eine boolesche Maske als 8-Bit PNG (0/255)."""
    if isinstance(mask, UvMap):
        mask = mask.mask
    directory = os.path.dirname(file_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    Image.fromarray(np.asarray(mask, dtype=bool).astype(np.uint8) * 255).save(file_path)


def load_mask_png(file_path: str) -> np.ndarray:
    """Lädt eine 8-Bit PNG-Maske; Werte ≥ 128 gelten als gesetzt."""
    if not os.path.exists(file_path):
        raise FileNotFoundError(f"Maske nicht gefunden: {file_path}")
    with Image.open(file_path) as img:
        return np.asarray(img.convert('L')) >= 128


def load_image(file_path: str) -> np.ndarray:
    """Lädt ein RGB-Bild als H×W×3 float64 in [0, 1]."""
    if not os.path.exists(file_path):
        raise FileNotFoundError(f"Bild nicht gefunden: {file_path}")
    with Image.open(file_path) as img:
        return np.asarray(img.convert('RGB'), dtype=np.float64) / 255.0


def save_image(rgb, file_path: str) -> None:
    """Speichert ein H×W×3 Bild mit Werten in [0, 1] als 8-Bit PNG."""
    directory = os.path.dirname(file_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    pixels = np.clip(np.rint(np.asarray(rgb, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(pixels).save(file_path)


def load_normal_image(file_path: str) -> np.ndarray:
    """Lädt eine Normalenkarte und dekodiert n = 2·pixel − 1."""
    return 2.0 * load_image(file_path) - 1.0
