"""
Visualization Module

Dieses Modul erstellt optionale PNG-Vorschauen einer Ausführung mit Matplotlib:
Histogramm der Dreiecksqualität, Heatmap der Verschiebungskarte und die Lochmaske
über der UV-Abdeckung.
"""

import os
import logging
from typing import Dict, List, Optional

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np

from core.mesh import Mesh, triangle_quality
from core.uv_map import UvMap
from core.utils import ensure_dir

# Logger konfigurieren
logger = logging.getLogger(__name__)


class VisualizationModule:
    """
    Erstellt Vorschaubilder im Unterverzeichnis previews/ des Ausgabeverzeichnisses.
    """

    def __init__(self, output_dir: str, config=None):
        """
        Initialisiert das Visualisierungsmodul.

        Args:
            output_dir: Ausgabeverzeichnis der Ausführung
            config: Optionale ConfigManager-Instanz ([Output] preview_dpi, color_scheme)
        """
        self.visualization_dir = os.path.join(output_dir, 'previews')
        self.image_dpi = 100
        self.color_scheme = 'viridis'
        if config is not None:
            self.image_dpi = config.getint('Output', 'preview_dpi', fallback=self.image_dpi)
            self.color_scheme = config.get('Output', 'color_scheme', fallback=self.color_scheme)
        ensure_dir(self.visualization_dir)
        logger.info(f"Visualisierungsmodul initialisiert: {self.visualization_dir}")

    def save_figure(self, fig, filename: str) -> str:
        """
        Speichert eine Matplotlib-Figur und schließt sie.

        Returns:
            str: Pfad zur gespeicherten Datei oder "" bei Fehler
        """
        file_path = os.path.join(self.visualization_dir, f"{filename}.png")
        fig.tight_layout()
        try:
            # Metadaten weglassen, sonst enthält die PNG die Matplotlib-Version
            fig.savefig(file_path, dpi=self.image_dpi, metadata={'Software': None})
            logger.info(f"Vorschau gespeichert: {file_path}")
            return file_path
        except (OSError, ValueError) as e:
            logger.error(f"Fehler beim Speichern der Vorschau '{filename}': {str(e)}")
            return ""
        finally:
            plt.close(fig)

    def quality_histogram(self, mesh: Mesh, filename: str = "quality_histogram") -> str:
        """Histogramm der Dreiecksqualität q ∈ [0, 1]."""
        quality, degenerate = triangle_quality(mesh)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.hist(quality[~degenerate], bins=50, range=(0.0, 1.0), color=plt.get_cmap(self.color_scheme)(0.6))
        ax.set_title(f"Dreiecksqualität (G-avg {quality.mean():.3f})")
        ax.set_xlabel("q = 4√3·A / Σl²")
        ax.set_ylabel("Anzahl Dreiecke")
        ax.grid(True, alpha=0.3)
        return self.save_figure(fig, filename)

    def displacement_heatmap(self, displacement: UvMap, filename: str = "displacement") -> str:
        """Heatmap der skalaren Verschiebung; nicht abgedeckte Texel bleiben leer."""
        values = np.ma.masked_where(~displacement.coverage, displacement.data[:, :, 0])
        fig, ax = plt.subplots(figsize=(5, 5))
        image = ax.imshow(values, cmap=self.color_scheme, interpolation='nearest')
        fig.colorbar(image, ax=ax, label="Verschiebung [m]")
        ax.set_title("Verschiebungskarte")
        ax.set_axis_off()
        return self.save_figure(fig, filename)

    def hole_overlay(self, hole: UvMap, filename: str = "holes") -> str:
        """Lochmaske (rot) über der UV-Abdeckung (grau)."""
        rgb = np.ones(hole.shape + (3,))
        rgb[hole.coverage] = 0.7
        rgb[hole.mask] = (0.85, 0.1, 0.1)
        fig, ax = plt.subplots(figsize=(5, 5))
        ax.imshow(rgb, interpolation='nearest')
        ax.set_title(f"Lochmaske ({int(hole.mask.sum())} Texel)")
        ax.set_axis_off()
        return self.save_figure(fig, filename)

    def create_all_previews(self, mesh: Optional[Mesh] = None, displacement: Optional[UvMap] = None,
                            hole: Optional[UvMap] = None) -> Dict[str, str]:
        """Erstellt alle Vorschauen, für die Daten vorliegen."""
        created: Dict[str, str] = {}
        jobs: List = []
        if mesh is not None and mesh.face_count:
            jobs.append(("quality_histogram", lambda: self.quality_histogram(mesh)))
        if displacement is not None:
            jobs.append(("displacement", lambda: self.displacement_heatmap(displacement)))
        if hole is not None:
            jobs.append(("holes", lambda: self.hole_overlay(hole)))
        for name, job in jobs:
            file_path = job()
            if file_path:
                created[name] = file_path
        logger.info(f"{len(created)} Vorschauen erstellt")
        return created
