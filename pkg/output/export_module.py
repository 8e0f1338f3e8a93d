"""
Export Module

Dieses Modul schreibt die Artefakte einer Pipeline-Ausführung: Netze, Masken, Texturen
und UV-Karten, den Auswertungsbericht als JSON und CSV, die Laufzeiten sowie das
Manifest mit Konfigurations-Hash, Paketversionen und Prüfsummen aller Dateien.
"""

import os
import logging
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import PIL
import scipy
import trimesh

from core.mesh import Mesh
from core.mesh_io import save_mesh
from core.uv_map import UvMap, save_image, save_mask_png
from core.utils import ensure_dir, save_json, sha256_file

# Logger konfigurieren
logger = logging.getLogger(__name__)

# Nachkommastellen im CSV-Bericht
CSV_FLOAT_FORMAT = '%.10g'


def package_versions() -> Dict[str, str]:
    """Versionen der Pakete, die die Ergebnisse bestimmen."""
    return {
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "trimesh": trimesh.__version__,
        "Pillow": PIL.__version__,
        "pandas": pd.__version__,
    }


class ExportModule:
    """
    Klasse zum Schreiben aller Artefakte einer Ausführung in ein Ausgabeverzeichnis.

    Jede geschriebene Datei wird mit ihrer Rolle registriert, damit das Manifest
    die vollständige Artefaktliste mit Prüfsummen enthält.
    """

    def __init__(self, output_dir: str = "./output"):
        """
        Initialisiert das Export-Modul.

        Args:
            output_dir: Verzeichnis für die Ausgabedateien

        Raises:
            OSError: Wenn das Verzeichnis nicht angelegt werden kann.
        """
        self.output_dir = output_dir
        if not ensure_dir(self.output_dir):
            raise OSError(f"Ausgabeverzeichnis konnte nicht angelegt werden: {output_dir}")
        self.artifacts: Dict[str, str] = {}
        logger.info(f"Export-Modul initialisiert. Ausgabeverzeichnis: {self.output_dir}")

    def path(self, filename: str) -> str:
        return os.path.join(self.output_dir, filename)

    def register(self, role: str, filename: str) -> str:
        """Registriert eine Datei als Artefakt und liefert ihren Pfad."""
        self.artifacts[role] = filename
        return self.path(filename)

    def export_mesh(self, role: str, mesh: Mesh, filename: str, uv_positions=None, uv_faces=None) -> str:
        """Schreibt ein Netz (OBJ/PLY) und registriert es."""
        output_path = self.register(role, filename)
        save_mesh(output_path, mesh, uv_positions, uv_faces)
        logger.info(f"Netz exportiert: {output_path} ({mesh})")
        return output_path

    def export_mask(self, role: str, mask, filename: str) -> str:
        output_path = self.register(role, filename)
        save_mask_png(mask, output_path)
        logger.info(f"Maske exportiert: {output_path}")
        return output_path

    def export_image(self, role: str, rgb: np.ndarray, filename: str) -> str:
        output_path = self.register(role, filename)
        save_image(rgb, output_path)
        logger.info(f"Bild exportiert: {output_path}")
        return output_path

    def export_uv_map(self, role: str, uv_map: UvMap, filename: str) -> str:
        output_path = self.register(role, filename)
        uv_map.save(output_path)
        logger.info(f"UV-Karte exportiert: {output_path} ({uv_map})")
        return output_path

    def export_json(self, role: str, data: Any, filename: str) -> str:
        """
        Schreibt JSON mit sortierten Schlüsseln.

        Raises:
            OSError: Wenn die Datei nicht geschrieben werden kann.
        """
        output_path = self.register(role, filename)
        if not save_json(data, output_path):
            raise OSError(f"JSON konnte nicht geschrieben werden: {output_path}")
        return output_path

    def export_report(self, report: Dict[str, Any], basename: str = "report") -> List[str]:
        """
        Schreibt den Auswertungsbericht als JSON und als einzeilige CSV-Datei.

        Returns:
            List[str]: Pfade der erstellten Dateien
        """
        json_path = self.export_json("report", report, f"{basename}.json")
        csv_path = self.register("report_csv", f"{basename}.csv")
        frame = pd.DataFrame([{key: report[key] for key in sorted(report)}])
        frame.to_csv(csv_path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')
        logger.info(f"Bericht exportiert: {json_path}, {csv_path}")
        return [json_path, csv_path]

    def export_timings(self, timings: Dict[str, float], filename: str = "timings.json") -> str:
        """Laufzeiten pro Stufe; nicht Teil des Manifests, da sie nicht reproduzierbar sind."""
        output_path = self.path(filename)
        if not save_json({k: round(float(v), 6) for k, v in timings.items()}, output_path):
            raise OSError(f"Laufzeiten konnten nicht geschrieben werden: {output_path}")
        return output_path

    def write_manifest(self, config_hash: str, stages: List[str], extra: Optional[Dict[str, Any]] = None,
                       filename: str = "manifest.json") -> str:
        """
        Schreibt das Manifest der Ausführung.

        Args:
            config_hash: SHA-256 der Konfiguration
            stages: Ausgeführte Stufen in Reihenfolge
            extra: Zusätzliche reproduzierbare Angaben (z. B. Stufenstatistiken)
            filename: Dateiname des Manifests

        Returns:
            str: Pfad zum Manifest
        """
        artifacts = []
        for role, name in sorted(self.artifacts.items()):
            file_path = self.path(name)
            if not os.path.exists(file_path):
                logger.warning(f"Artefakt '{role}' fehlt: {file_path}")
                continue
            artifacts.append({"role": role, "file": name, "sha256": sha256_file(file_path)})
        manifest = {
            "config_hash": config_hash,
            "versions": package_versions(),
            "stages": list(stages),
            "artifacts": artifacts,
        }
        if extra:
            manifest.update(extra)
        output_path = self.path(filename)
        if not save_json(manifest, output_path):
            raise OSError(f"Manifest konnte nicht geschrieben werden: {output_path}")
        logger.info(f"Manifest geschrieben: {output_path} ({len(artifacts)} Artefakte)")
        return output_path
