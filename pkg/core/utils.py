"""
Utilities Module

Dieses Modul enthält allgemeine Hilfsfunktionen, die von verschiedenen
Teilen der Anwendung verwendet werden (Dateien, JSON, Binär-Sidecars, Prüfsummen).
"""

import os
import json
import hashlib
import concurrent.futures
import logging
from typing import Any, Callable, List, Optional

import numpy as np
from tqdm import tqdm

# Logger konfigurieren
logger = logging.getLogger(__name__)


def ensure_dir(directory: str) -> bool:
    """
    Stellt sicher, dass das angegebene Verzeichnis existiert.

    Args:
        directory: Der Pfad zum zu überprüfenden/erstellenden Verzeichnis

    Returns:
        bool: True, wenn das Verzeichnis existiert (oder erstellt wurde), sonst False
    """
    if not directory:
        return False

    try:
        os.makedirs(directory, exist_ok=True)
        return True
    except OSError as e:
        logger.error(f"Fehler beim Erstellen des Verzeichnisses '{directory}': {str(e)}")
        return False


def format_duration(seconds: float) -> str:
    """
    Formatiert eine Dauer in Sekunden in ein menschenlesbares Format.

    Args:
        seconds: Dauer in Sekunden

    Returns:
        str: Formatierte Dauer (z.B. "2m 5.3s")
    """
    if seconds <= 0:
        return "0s"
    minutes, rest = divmod(float(seconds), 60.0)
    if minutes >= 1:
        return f"{int(minutes)}m {rest:.1f}s"
    return f"{rest:.2f}s"


def save_json(data: Any, file_path: str, indent: int = 2) -> bool:
    """
    Speichert Daten als JSON-Datei mit sortierten Schlüsseln (byte-stabil).

    Args:
        data: Die zu speichernden Daten
        file_path: Der Pfad zur Ausgabedatei
        indent: Einrückung für die JSON-Datei

    Returns:
        bool: True bei Erfolg, False bei Fehler
    """
    try:
        ensure_dir(os.path.dirname(file_path))
        with open(file_path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(data, f, indent=indent, ensure_ascii=False, sort_keys=True)
            f.write('\n')
        logger.debug(f"JSON gespeichert: '{file_path}'")
        return True
    except (OSError, TypeError, ValueError) as e:
        logger.error(f"Fehler beim Speichern der JSON-Datei '{file_path}': {str(e)}")
        return False


def load_json(file_path: str, required: bool = False) -> Optional[Any]:
    """
    Lädt Daten aus einer JSON-Datei.

    Args:
        file_path: Der Pfad zur JSON-Datei
        required: Fehler auslösen statt None zurückzugeben

    Returns:
        Optional[Any]: Die geladenen Daten oder None bei Fehler

    Raises:
        FileNotFoundError: Wenn required gesetzt ist und die Datei fehlt.
        OSError: Wenn required gesetzt ist und die Datei kein gültiges JSON enthält.
    """
    if not os.path.exists(file_path):
        if required:
            raise FileNotFoundError(f"JSON-Datei nicht gefunden: {file_path}")
        logger.warning(f"JSON-Datei '{file_path}' existiert nicht")
        return None
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        if required:
            raise OSError(f"Ungültige JSON-Datei '{file_path}': {e}") from e
        logger.error(f"Fehler beim Laden der JSON-Datei '{file_path}': {str(e)}")
        return None


def write_array(file_path: str, array: np.ndarray, dtype: str) -> None:
    """Schreibt ein Array roh (Little Endian, C-Reihenfolge) als Binär-Sidecar."""
    ensure_dir(os.path.dirname(file_path))
    with open(file_path, 'wb') as f:
        f.write(np.ascontiguousarray(array, dtype=np.dtype(dtype).newbyteorder('<')).tobytes())


def read_array(file_path: str, dtype: str, shape) -> np.ndarray:
    """
    Liest einen Binär-Sidecar und prüft die erwartete Größe.

    Raises:
        FileNotFoundError: Wenn die Datei fehlt.
        OSError: Wenn die Dateigröße nicht zur Form passt.
    """
    if not os.path.exists(file_path):
        raise FileNotFoundError(f"Sidecar-Datei nicht gefunden: {file_path}")
    dt = np.dtype(dtype).newbyteorder('<')
    raw = np.fromfile(file_path, dtype=dt)
    expected = int(np.prod(shape))
    if raw.size != expected:
        raise OSError(f"Sidecar '{file_path}' enthält {raw.size} statt {expected} Werte")
    return raw.reshape(shape).astype(dt.newbyteorder('='))


def sha256_file(file_path: str, block_size: int = 1 << 20) -> str:
    """SHA-256-Prüfsumme einer Datei als Hex-String."""
    digest = hashlib.sha256()
    with open(file_path, 'rb') as f:
        for block in iter(lambda: f.read(block_size), b''):
            digest.update(block)
    return digest.hexdigest()


def run_chunked(fn: Callable, n: int, chunk_size: int, max_workers: int = 1, *arrays,
                progress: bool = False, desc: str = "") -> List[Any]:
    """
    Wendet fn blockweise auf gleich lange Arrays an.

    Die Blöcke haben feste Größe und werden in Blockreihenfolge zurückgegeben; das
    Ergebnis hängt daher nicht von der Anzahl der Worker ab. Parallel wird nur
    gerechnet, wenn max_workers > 1 und mehr als ein Block anfällt.

    Args:
        fn: Funktion über die Block-Slices aller Arrays
        n: Gesamtlänge
        chunk_size: Blockgröße
        max_workers: Maximale Anzahl paralleler Worker
        arrays: Arrays der Länge n
        progress: Fortschrittsbalken anzeigen
        desc: Beschreibung für den Fortschrittsbalken

    Returns:
        List[Any]: Ergebnisse pro Block
    """
    chunk_size = max(1, int(chunk_size))
    bounds = [(s, min(s + chunk_size, n)) for s in range(0, n, chunk_size)]
    jobs = [tuple(a[s:e] for a in arrays) for s, e in bounds]
    show = progress and len(jobs) > 1
    if max_workers > 1 and len(jobs) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
            results = executor.map(lambda args: fn(*args), jobs)
            return list(tqdm(results, total=len(jobs), desc=desc, disable=not show))
    return [fn(*args) for args in tqdm(jobs, desc=desc, disable=not show)]
