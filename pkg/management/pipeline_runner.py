"""
Pipeline Runner Modul

Dieses Modul führt die Stufen der Registrierung in fester Reihenfolge aus:
Unterteilung (optional), Registrierung per SNS, Vervollständigung, Verfeinerung
(optional), Texturierung (optional) und Auswertung (optional). Jede Stufe schreibt
ihre Zwischenergebnisse; ein Fehler bricht mit Stufenname und Ursache ab, bereits
geschriebene Dateien bleiben erhalten.
"""

import os
import time
import logging
from contextlib import contextmanager
from typing import Any, Dict, List, Optional, Union

from core.bvh import Bvh
from core.camera import Camera
from core.mesh import Mesh
from core.mesh_io import load_mesh
from core.raster import UvRasterizer
from core.sdf import GridSdf, SdfField
from core.template import Pose, SemanticTemplate, load_template, save_template, subdivide_midpoint
from core.uv_map import UvMap, load_image
from core.utils import format_duration
from analysis.metrics_module import MetricsConfig, evaluate
from management.config_manager import ConfigManager
from output.export_module import ExportModule
from refinement.refinement_module import RefinementConfig, refine_apply
from registration.completion_module import CompletionConfig, CompletionResult, complete_mesh
from registration.sns_module import SnsConfig, SnsResult, sns_register
from texturing.texture_module import TextureConfig, sample_partial_texture

# Logger konfigurieren
logger = logging.getLogger(__name__)


class PipelineStageError(RuntimeError):
    """Fehler in einer Pipeline-Stufe; stage nennt die Stufe, cause die ursprüngliche Ausnahme."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"Stufe '{stage}' fehlgeschlagen: {cause}")
        self.stage = stage
        self.cause = cause


def _split_timing(stats: Dict[str, Any]) -> Dict[str, Any]:
    """Entfernt nicht reproduzierbare Laufzeitangaben aus Statistiken."""
    return {k: v for k, v in stats.items() if not k.endswith('wall_time_s')}


class PipelineRunner:
    """
    Führt die Pipeline für eine Konfiguration aus.

    Relative Pfade in [Pipeline] werden gegen das Verzeichnis der Konfigurationsdatei
    aufgelöst.
    """

    def __init__(self, config: ConfigManager, overrides: Optional[Dict[str, Any]] = None,
                 previews: Optional[bool] = None):
        """
        Initialisiert den Runner und prüft die Konfiguration.

        Args:
            config: Geladene Konfiguration
            overrides: Kommandozeilenwerte, die Konfigurationswerte überschreiben (z. B. workers)
            previews: Vorschauen erzwingen oder unterdrücken (None: [Output] previews)

        Raises:
            ValueError: Bei fehlenden Pflichtfeldern oder ungültigen Werten.
        """
        self.config = config
        config.validate_required_settings()
        is_valid, errors = config.validate_config()
        if not is_valid:
            raise ValueError("Ungültige Konfiguration: " + "; ".join(errors))

        overrides = overrides or {}
        self.sns_cfg = SnsConfig.from_config(config, overrides)
        self.completion_cfg = CompletionConfig.from_config(config)
        self.refinement_cfg = RefinementConfig.from_config(config)
        self.texture_cfg = TextureConfig.from_config(config)
        self.metrics_cfg = MetricsConfig.from_config(config)

        self.previews = config.getboolean('Output', 'previews', fallback=False) if previews is None else previews
        self.output_dir = config.resolve_path(config.require('Pipeline', 'output_dir'))
        self.stages_run: List[str] = []
        self.timings: Dict[str, float] = {}
        self.stage_stats: Dict[str, Dict[str, Any]] = {}

    def _input(self, option: str) -> Optional[str]:
        value = self.config.get('Pipeline', option, '')
        return self.config.resolve_path(value.strip()) if value and value.strip() else None

    @contextmanager
    def _stage(self, name: str):
        start_time = time.time()
        logger.info(f"Stufe '{name}' gestartet")
        try:
            yield
        except PipelineStageError:
            raise
        except Exception as e:
            logger.error(f"Stufe '{name}' fehlgeschlagen: {str(e)}")
            raise PipelineStageError(name, e) from e
        self.timings[name] = time.time() - start_time
        self.stages_run.append(name)
        logger.info(f"Stufe '{name}' abgeschlossen in {format_duration(self.timings[name])}")

    def _load_target(self, target_path: str) -> Union[Bvh, SdfField]:
        if target_path.lower().endswith('.sdf'):
            return GridSdf.load(target_path)
        return Bvh(load_mesh(target_path), chunk_size=self.sns_cfg.chunk_size, workers=self.sns_cfg.workers)

    def run(self) -> Dict[str, Any]:
        """
        Führt alle konfigurierten Stufen aus.

        Returns:
            Dict[str, Any]: Ausgabeverzeichnis, ausgeführte Stufen, Artefakte und Bericht

        Raises:
            PipelineStageError: Wenn eine Stufe fehlschlägt.
        """
        start_time = time.time()
        export = ExportModule(self.output_dir)
        report: Optional[Dict[str, Any]] = None

        with self._stage("load"):
            tmpl = load_template(self._input('template'))
            pose_path = self._input('pose')
            pose = Pose.load(pose_path, tmpl.joint_count) if pose_path else Pose.identity(tmpl.joint_count)
            target = self._load_target(self._input('target'))

        levels = self.config.getint('Pipeline', 'subdivide', fallback=0)
        if levels > 0:
            with self._stage("subdivide"):
                for _ in range(levels):
                    tmpl = subdivide_midpoint(tmpl)
                template_path = export.register("template", "template_subdivided.json")
                save_template(tmpl, template_path)

        raster = UvRasterizer.for_template(tmpl, self.sns_cfg.uv_resolution)

        with self._stage("register"):
            sns = sns_register(tmpl, pose, target, self.sns_cfg, rasterizer=raster)
            export.export_mesh("partial", sns.sampled, "partial.obj")
            export.export_mask("holes", sns.hole_mask, "holes.png")
            self.stage_stats["register"] = _split_timing(sns.stats)

        with self._stage("complete"):
            completion = complete_mesh(sns, tmpl, pose, self.completion_cfg, rasterizer=raster)
            final = completion.mesh
            export.export_mesh("complete", final, "complete.obj", tmpl.uv_positions, tmpl.uv_faces)
            export.export_uv_map("displacement", completion.displacement, "displacement.uvm")
            export.export_uv_map("canonical_positions", completion.canonical_map, "canonical.uvm")
            self.stage_stats["complete"] = _split_timing(completion.stats)

        z_path = self._input('z_map')
        if z_path:
            with self._stage("refine"):
                z = UvMap.load(z_path)
                z_raster = raster if z.shape == raster.resolution else UvRasterizer.for_template(tmpl, z.shape)
                final = refine_apply(final, tmpl, z, self.refinement_cfg, rasterizer=z_raster)
                export.export_mesh("refined", final, "refined.obj", tmpl.uv_positions, tmpl.uv_faces)

        image_path, camera_path = self._input('image'), self._input('camera')
        if self.config.getboolean('Pipeline', 'texture', fallback=True) and image_path and camera_path:
            with self._stage("texture"):
                texture, visible = sample_partial_texture(final, tmpl, load_image(image_path),
                                                          Camera.load(camera_path), self.texture_cfg)
                export.export_image("texture", texture.data, "texture.png")
                export.export_mask("texture_mask", visible, "texture_mask.png")

        gt_path = self._input('ground_truth')
        if self.config.getboolean('Pipeline', 'evaluate', fallback=True) and gt_path:
            with self._stage("eval"):
                report = evaluate(final, load_mesh(gt_path), self.metrics_cfg.resolution, self.metrics_cfg.views)
                self.timings["eval_metrics"] = report.pop("wall_time_s")
                export.export_report(report)

        if self.previews:
            self._write_previews(final, completion, sns)

        self.timings["total"] = time.time() - start_time
        export.export_timings(self.timings)
        export.write_manifest(self.config.config_hash(), self.stages_run, {"stage_stats": self.stage_stats})
        logger.info(f"Pipeline abgeschlossen in {format_duration(self.timings['total'])}: "
                    f"{', '.join(self.stages_run)}")
        return {"output_dir": self.output_dir, "stages": list(self.stages_run),
                "artifacts": dict(export.artifacts), "report": report}

    def _write_previews(self, mesh: Mesh, completion: CompletionResult, sns: SnsResult) -> None:
        # Vorschauen sind nicht Teil des Manifests
        from analysis.visualization_module import VisualizationModule

        VisualizationModule(self.output_dir, self.config).create_all_previews(
            mesh, completion.displacement, sns.hole_mask)


def run_pipeline(config_file: str, overrides: Optional[Dict[str, Any]] = None,
                 previews: Optional[bool] = None) -> Dict[str, Any]:
    """Lädt die Konfiguration und führt die Pipeline aus."""
    return PipelineRunner(ConfigManager(config_file), overrides, previews).run()


def template_summary(tmpl: SemanticTemplate) -> Dict[str, Any]:
    return {"vertices": tmpl.vertex_count, "faces": tmpl.mesh.face_count, "joints": tmpl.joint_count,
            "subdivision_level": tmpl.subdivision_level}

