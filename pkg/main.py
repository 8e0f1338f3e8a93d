#!/usr/bin/env python3
"""
semreg - Hauptprogramm

Dieses Skript dient als Einstiegspunkt für semreg. Es lädt die Konfiguration,
richtet das Logging ein und bietet für jede Stufe der Registrierung einen eigenen
Unterbefehl mit dateibasierter Ein- und Ausgabe sowie den Befehl "run" für die
komplette Pipeline.
"""

import os
import sys
import json
import argparse
import configparser
import logging
import time
from logging.handlers import RotatingFileHandler

# Pfad zum übergeordneten Verzeichnis hinzufügen, um Importe zu ermöglichen
sys.path.insert(0, os.path.abspath(os.path.dirname(__file__)))

# Import der Module
try:
    from management.config_manager import ConfigManager
    from management.fixture_generator import FIXTURES, generate_fixture
    from management.pipeline_runner import PipelineStageError, run_pipeline, template_summary
    from core.bvh import Bvh
    from core.camera import Camera
    from core.mesh import Mesh
    from core.mesh_io import load_mesh, load_obj, save_mesh
    from core.raster import UvRasterizer
    from core.sdf import GridSdf
    from core.template import Pose, downsample, lbs_pose, load_template, save_template, subdivide_midpoint
    from core.uv_map import UvMap, load_image, load_mask_png, save_image, save_mask_png
    from core.utils import save_json
    from analysis.metrics_module import MetricsConfig, evaluate
    from refinement.refinement_module import (ImageStack, RefinementConfig, normal_map_error,
                                              project_image_to_uv, refine_apply)
    from registration.completion_module import CompletionConfig, complete_mesh
    from registration.sns_module import SnsConfig, SnsResult, partial_validity, sns_register
    from registration.substitution_module import SubstitutionConfig, resample_donor, substitute_part
    from registration.uv_domain import normal_map, position_map
    from texturing.icp_module import IcpConfig
    from texturing.texture_module import TextureConfig, sample_partial_texture, transfer_vertex_colors
except ImportError as e:
    print(f"Fehler beim Importieren der Module: {e}")
    print("Führen Sie 'pip install -r requirements.txt' aus, um alle Abhängigkeiten zu installieren.")
    sys.exit(1)

# Exit-Codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Fehler in Aufruf oder Konfiguration (Exit-Code 2)."""


def setup_logging(config):
    """
    Konfiguriert das Logging-System basierend auf den Einstellungen in der Konfigurationsdatei.

    Args:
        config: ConfigManager-Instanz mit geladener Konfiguration
    """
    log_level_str = config.get('Logging', 'log_level', fallback='INFO')
    log_level = getattr(logging, log_level_str.upper(), logging.INFO)
    log_format = config.get('Logging', 'log_format',
                            fallback='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    log_date_format = config.get('Logging', 'log_date_format',
                                 fallback='%Y-%m-%d %H:%M:%S')
    log_file = config.get('Logging', 'log_file', fallback='console')
    max_bytes = config.getint('Logging', 'log_file_max_size', fallback=10 * 1024 * 1024)
    backup_count = config.getint('Logging', 'log_file_backup_count', fallback=3)

    formatter = logging.Formatter(log_format, log_date_format)
    handlers = [logging.StreamHandler()]
    if log_file.lower() != 'console':
        handlers.append(RotatingFileHandler(log_file, maxBytes=max_bytes, backupCount=backup_count,
                                            encoding='utf-8'))

    # Root-Logger abrufen
    logger = logging.getLogger()
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    for handler in handlers:
        handler.setLevel(log_level)
        handler.setFormatter(formatter)
        logger.addHandler(handler)
    logger.setLevel(log_level)

    logging.debug(f"Logging initialisiert mit Level: {log_level_str}")


def load_configuration(config_file):
    """
    Lädt die Konfiguration; ohne Datei gelten die Standardwerte aller Module.

    Raises:
        UsageError: Wenn die Datei fehlt, nicht lesbar oder ungültig ist.
    """
    try:
        config = ConfigManager(config_file)
    except (FileNotFoundError, configparser.Error) as e:
        raise UsageError(str(e)) from e
    is_valid, errors = config.validate_config()
    if not is_valid:
        raise UsageError("Ungültige Konfiguration: " + "; ".join(errors))
    return config


def emit_json(data):
    print(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False))


# ----------------------------------------------------------------------
# Unterbefehle
# ----------------------------------------------------------------------

def cmd_gen_fixture(args, config):
    files = generate_fixture(args.name, args.out, args.image_resolution)
    emit_json(files)


def cmd_subdivide(args, config):
    tmpl = load_template(args.template)
    for _ in range(args.levels):
        tmpl = subdivide_midpoint(tmpl)
    save_template(tmpl, args.out)
    emit_json(template_summary(tmpl))


def cmd_downsample(args, config):
    tmpl = load_template(args.template)
    positions = load_mesh(args.mesh).positions if args.mesh else None
    coarse = downsample(tmpl, args.level, positions)
    if args.out.lower().endswith('.json'):
        save_template(coarse, args.out)
    else:
        save_mesh(args.out, coarse.mesh, coarse.uv_positions, coarse.uv_faces)
    emit_json(template_summary(coarse))


def _load_pose(path, tmpl):
    return Pose.load(path, tmpl.joint_count) if path else Pose.identity(tmpl.joint_count)


def _sns_overrides(args):
    return {'workers': args.threads, 'range': getattr(args, 'range', None),
            'theta': getattr(args, 'theta', None), 'area_ratio': getattr(args, 'area_ratio', None),
            'edge_ratio': getattr(args, 'edge_ratio', None), 'sdf_step': getattr(args, 'sdf_step', None),
            'min_component': getattr(args, 'min_component', None),
            'uv_resolution': getattr(args, 'uv_resolution', None)}


def _split_list(value):
    return [v.strip() for v in value.split(',') if v.strip()] if value else None


def cmd_register(args, config):
    tmpl = load_template(args.template)
    cfg = SnsConfig.from_config(config, _sns_overrides(args))
    pose = _load_pose(args.pose, tmpl)
    if args.target.lower().endswith('.sdf'):
        target = GridSdf.load(args.target)
    else:
        target = Bvh(load_mesh(args.target), chunk_size=cfg.chunk_size, workers=cfg.workers)
    result = sns_register(tmpl, pose, target, cfg)
    save_mesh(args.out, result.sampled)
    save_mask_png(result.hole_mask, args.holemask)
    emit_json(result.stats)


def cmd_complete(args, config):
    tmpl = load_template(args.template)
    pose = _load_pose(args.pose, tmpl)
    overrides = {'uv_resolution': args.uv_resolution, 'dilate': args.dilate, 'tolerance': args.tol,
                 'replace_parts': _split_list(args.replace)}
    cfg = CompletionConfig.from_config(config, overrides)
    partial = load_mesh(args.partial)
    if partial.vertex_count != tmpl.vertex_count:
        raise ValueError(f"Partielles Netz hat {partial.vertex_count} Vertices, Template {tmpl.vertex_count}")
    raster = UvRasterizer.for_template(tmpl, cfg.uv_resolution)
    valid = partial_validity(partial)
    alive = valid[tmpl.mesh.faces].all(axis=1)
    if args.holemask:
        hole = UvMap.from_mask(_load_hole_mask(args.holemask, raster), raster.coverage)
    else:
        hole = UvMap.from_mask(raster.coverage & ~raster.texels_of_faces(alive), raster.coverage)
    posed = lbs_pose(tmpl, tmpl.mesh.positions, pose)
    sns = SnsResult(Mesh(partial.positions, tmpl.mesh.faces[alive]), valid, hole, posed, 0.0)
    result = complete_mesh(sns, tmpl, pose, cfg, rasterizer=raster)
    save_mesh(args.out, result.mesh, tmpl.uv_positions, tmpl.uv_faces)
    if args.displacement_out:
        result.displacement.save(args.displacement_out)
    emit_json(result.stats)


def _load_hole_mask(path, raster):
    mask = load_mask_png(path)
    if mask.shape != raster.resolution:
        raise ValueError(f"Maske {mask.shape} passt nicht zur UV-Auflösung {raster.resolution}")
    return mask & raster.coverage


def cmd_refine_apply(args, config):
    tmpl = load_template(args.template)
    cfg = RefinementConfig.from_config(config, {'smooth_lambda': args.smooth_lambda,
                                                'smooth_iters': args.smooth_iters})
    mesh = load_mesh(args.complete)
    z = UvMap.load(args.z)
    raster = UvRasterizer.for_template(tmpl, z.shape)
    refined = refine_apply(mesh, tmpl, z, cfg, rasterizer=raster)
    save_mesh(args.out, refined, tmpl.uv_positions, tmpl.uv_faces)
    n_in = normal_map(tmpl, mesh.positions, rasterizer=raster)
    n_out = normal_map(tmpl, refined.positions, rasterizer=raster)
    emit_json({"normal_map_error": normal_map_error(n_out, n_in)})


def cmd_project_features(args, config):
    if args.positions:
        s_map = UvMap.load(args.positions)
    elif args.template and args.mesh:
        tmpl = load_template(args.template)
        resolution = args.uv_resolution or config.getint('Pipeline', 'uv_resolution', fallback=1024)
        s_map = position_map(tmpl, load_mesh(args.mesh).positions, resolution)
    else:
        raise UsageError("project-features benötigt --positions oder --template zusammen mit --mesh")
    stack = ImageStack.load(args.image, args.front_normal, args.back_normal)
    features, out_of_frame = project_image_to_uv(stack, s_map, Camera.load(args.camera))
    features.save(args.out)
    emit_json({"texels": int(features.coverage.sum()), "out_of_frame": int(out_of_frame.sum())})


def cmd_texture(args, config):
    tmpl = load_template(args.template)
    cfg = TextureConfig.from_config(config, {'resolution': args.resolution, 'erode_margin': args.erode_margin})
    mesh = load_mesh(args.mesh)
    texture, visible = sample_partial_texture(mesh, tmpl, load_image(args.image), Camera.load(args.camera), cfg)
    save_image(texture.data, args.out)
    if args.mask:
        save_mask_png(visible, args.mask)
    emit_json({"visible_texels": int(visible.mask.sum()), "covered_texels": int(visible.coverage.sum())})


def cmd_transfer_color(args, config):
    tmpl = load_template(args.template) if args.template else None
    if tmpl is None and args.mesh.lower().endswith('.obj'):
        semantic, uv_positions, uv_faces = load_obj(args.mesh)
    else:
        semantic, uv_positions, uv_faces = load_mesh(args.mesh), None, None
    if tmpl is None and uv_positions is None:
        raise UsageError("transfer-color benötigt --template oder ein OBJ mit Texturkoordinaten")
    scan = load_mesh(args.scan)
    icp_cfg = IcpConfig.from_config(config, {'max_iters': args.icp_iters})
    resolution = TextureConfig.from_config(config, {'resolution': args.resolution}).resolution
    colors, texture, icp = transfer_vertex_colors(semantic, scan, Bvh(scan, workers=args.threads or 1),
                                                  tmpl, icp_cfg, resolution)
    if texture is None:
        texture = UvRasterizer(uv_positions, uv_faces, semantic.faces, resolution).rasterize(colors)
    save_image(texture.data, args.out)
    if args.colored_out:
        save_mesh(args.colored_out, Mesh(semantic.positions, semantic.faces, colors))
    emit_json({"icp_iterations": icp.iterations, "icp_error": icp.errors[-1],
               "transform": icp.transform.to_dict()})


def cmd_animate(args, config):
    tmpl = load_template(args.template)
    pose = Pose.load(args.pose, tmpl.joint_count)
    rest = load_mesh(args.mesh).positions if args.mesh else tmpl.mesh.positions
    if len(rest) != tmpl.vertex_count:
        raise ValueError(f"Netz hat {len(rest)} Vertices, Template {tmpl.vertex_count}")
    posed = lbs_pose(tmpl, rest, pose)
    save_mesh(args.out, Mesh(posed, tmpl.mesh.faces), tmpl.uv_positions, tmpl.uv_faces)
    emit_json({"vertices": tmpl.vertex_count})


def cmd_eval(args, config):
    views = _split_list(args.views)
    cfg = MetricsConfig.from_config(config, {'resolution': args.resolution, 'views': views})
    report = evaluate(load_mesh(args.pred), load_mesh(args.gt), cfg.resolution, cfg.views)
    if args.out:
        save_json(report, args.out)
    emit_json(report)


def cmd_substitute(args, config):
    tmpl = load_template(args.template)
    cfg = SubstitutionConfig.from_config(config, {'band': args.band, 'icp_iters': args.icp_iters})
    base = load_mesh(args.mesh)
    donor = UvMap.load(args.donor) if args.donor.lower().endswith('.uvm') else load_mesh(args.donor)
    donor_positions = resample_donor(donor, tmpl)
    result, transform = substitute_part(base, donor_positions, tmpl, args.label, cfg)
    save_mesh(args.out, result, tmpl.uv_positions, tmpl.uv_faces)
    emit_json({"label": args.label, "transform": transform.to_dict()})


def cmd_run(args, config):
    overrides = {'workers': args.threads}
    result = run_pipeline(args.pipeline_config, overrides, True if args.previews else None)
    emit_json({k: result[k] for k in ("output_dir", "stages", "artifacts")})


# ----------------------------------------------------------------------
# Argumente
# ----------------------------------------------------------------------

def parse_arguments(argv=None):
    """
    Parst Kommandozeilenargumente.

    Returns:
        argparse.Namespace: Geparste Argumente
    """
    parser = argparse.ArgumentParser(prog='semreg', description='Semantische Template-Registrierung')
    parser.add_argument('-c', '--config', default=None,
                        help='Pfad zur Konfigurationsdatei (Standard: nur Standardwerte)')
    parser.add_argument('--threads', type=int, default=None,
                        help='Maximale Anzahl Worker-Threads (Ergebnisse bleiben identisch)')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen-fixture', help='Analytische Testszene erzeugen')
    p.add_argument('name', choices=FIXTURES)
    p.add_argument('--out', required=True)
    p.add_argument('--image-resolution', type=int, default=256)
    p.set_defaults(handler=cmd_gen_fixture)

    p = sub.add_parser('subdivide', help='Template per Mittelpunkt-Unterteilung verfeinern')
    p.add_argument('--template', required=True)
    p.add_argument('--levels', type=int, default=1)
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_subdivide)

    p = sub.add_parser('downsample', help='Template oder Instanz auf eine gröbere Stufe reduzieren')
    p.add_argument('--template', required=True)
    p.add_argument('--level', type=int, required=True)
    p.add_argument('--mesh', help='Deformierte Instanz des Templates')
    p.add_argument('--out', required=True, help='.json (Template) oder .obj/.ply (Netz)')
    p.set_defaults(handler=cmd_downsample)

    p = sub.add_parser('register', help='SNS-Registrierung auf Netz (.obj/.ply) oder Distanzfeld (.sdf)')
    p.add_argument('--template', required=True)
    p.add_argument('--target', required=True)
    p.add_argument('--pose')
    p.add_argument('--out', required=True)
    p.add_argument('--holemask', required=True, help='Lochmaske als PNG')
    p.add_argument('--theta', type=float, help='Winkelschwelle in Radiant')
    p.add_argument('--area-ratio', type=float)
    p.add_argument('--edge-ratio', type=float)
    p.add_argument('--min-component', type=float, help='Mindestfläche einer Zusammenhangskomponente')
    p.add_argument('--range', type=float)
    p.add_argument('--sdf-step', type=float)
    p.add_argument('--uv-resolution', type=int)
    p.set_defaults(handler=cmd_register)

    p = sub.add_parser('complete', help='Partielles Netz harmonisch vervollständigen')
    p.add_argument('--template', required=True)
    p.add_argument('--partial', required=True)
    p.add_argument('--holemask', help='Lochmaske (Standard: aus dem partiellen Netz abgeleitet)')
    p.add_argument('--pose')
    p.add_argument('--out', required=True)
    p.add_argument('--dilate', type=int)
    p.add_argument('--tol', type=float, help='Toleranz des iterativen Lösers')
    p.add_argument('--replace', help='Kommagetrennte Teile, z. B. face,hands,feet')
    p.add_argument('--uv-resolution', type=int)
    p.add_argument('--displacement-out')
    p.set_defaults(handler=cmd_complete)

    p = sub.add_parser('refine-apply', help='Glätten und Verschiebungskarte anwenden')
    p.add_argument('--complete', required=True, help='Vervollständigtes Netz')
    p.add_argument('--z', required=True, help='1-Kanal UV-Karte (.uvm)')
    p.add_argument('--template', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--smooth-lambda', type=float)
    p.add_argument('--smooth-iters', type=int)
    p.set_defaults(handler=cmd_refine_apply)

    p = sub.add_parser('project-features', help='Bild und Normalenkarten in den UV-Raum projizieren')
    p.add_argument('--image', required=True)
    p.add_argument('--front-normal', required=True)
    p.add_argument('--back-normal', required=True)
    p.add_argument('--camera', required=True)
    p.add_argument('--positions', help='Positionskarte (.uvm)')
    p.add_argument('--template', help='Alternativ zu --positions, zusammen mit --mesh')
    p.add_argument('--mesh')
    p.add_argument('--uv-resolution', type=int)
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_project_features)

    p = sub.add_parser('texture', help='Partielle Textur aus dem Eingabebild')
    p.add_argument('--mesh', required=True)
    p.add_argument('--template', required=True)
    p.add_argument('--image', required=True)
    p.add_argument('--camera', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--mask', help='Sichtbarkeitsmaske als PNG')
    p.add_argument('--resolution', type=int)
    p.add_argument('--erode-margin', type=int)
    p.set_defaults(handler=cmd_texture)

    p = sub.add_parser('transfer-color', help='Scanfarben nach ICP in eine Textur übertragen')
    p.add_argument('--mesh', required=True, help='Vervollständigtes Netz (OBJ mit Texturkoordinaten)')
    p.add_argument('--scan', required=True)
    p.add_argument('--out', required=True, help='Textur als PNG')
    p.add_argument('--template', help='UV-Atlas des Templates statt der OBJ-Texturkoordinaten')
    p.add_argument('--colored-out', help='Netz mit übertragenen Vertexfarben')
    p.add_argument('--icp-iters', type=int)
    p.add_argument('--resolution', type=int)
    p.set_defaults(handler=cmd_transfer_color)

    p = sub.add_parser('animate', help='Pose per LBS anwenden und exportieren')
    p.add_argument('--template', required=True)
    p.add_argument('--pose', required=True)
    p.add_argument('--mesh', help='Instanz in Ruhepose (Standard: Template)')
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_animate)

    p = sub.add_parser('eval', help='Auswertung gegen ein Referenznetz')
    p.add_argument('--pred', required=True)
    p.add_argument('--gt', required=True)
    p.add_argument('--resolution', '--res', type=int)
    p.add_argument('--views', help='Kommagetrennte Ansichten (front,back)')
    p.add_argument('--out')
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser('substitute', help='Körperteil durch Spendergeometrie ersetzen')
    p.add_argument('--template', required=True)
    p.add_argument('--mesh', required=True)
    p.add_argument('--donor', required=True, help='Netz mit Template-Vertexanzahl oder Positionskarte (.uvm)')
    p.add_argument('--label', required=True)
    p.add_argument('--band', type=int)
    p.add_argument('--icp-iters', type=int)
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_substitute)

    p = sub.add_parser('run', help='Komplette Pipeline gemäß pipeline.ini ausführen')
    p.add_argument('pipeline_config')
    p.add_argument('--previews', action='store_true', help='PNG-Vorschauen erstellen')
    p.set_defaults(handler=cmd_run)

    return parser.parse_args(argv)


def report_error(error, stage=None):
    """Schreibt genau eine maschinenlesbare JSON-Zeile nach stderr."""
    payload = {"error": type(error).__name__, "message": str(error), "stage": stage}
    sys.stderr.write(json.dumps(payload, ensure_ascii=False) + '\n')


def main(argv=None):
    """
    Hauptfunktion des Programms.

    Returns:
        int: Exit-Code (0 Erfolg, 1 Fehler, 2 Aufruf- oder Konfigurationsfehler)
    """
    start_time = time.time()
    args = parse_arguments(argv)

    try:
        config = load_configuration(args.config)
        if args.command == 'run':
            setup_logging(load_configuration(args.pipeline_config))
        else:
            setup_logging(config)
        if args.threads is not None and args.threads < 1:
            raise UsageError(f"--threads muss >= 1 sein, erhalten {args.threads}")
        args.handler(args, config)
    except UsageError as e:
        report_error(e)
        return EXIT_USAGE
    except PipelineStageError as e:
        logging.debug("Details", exc_info=True)
        report_error(e.cause, e.stage)
        return EXIT_FAILURE
    except Exception as e:
        logging.debug("Details", exc_info=True)
        # Fehlende Pflichtfelder der Pipeline-Konfiguration sind Konfigurationsfehler
        if args.command == 'run' and isinstance(e, ValueError):
            report_error(e)
            return EXIT_USAGE
        report_error(e, args.command)
        return EXIT_FAILURE

    logging.info(f"Befehl '{args.command}' beendet. Laufzeit: {time.time() - start_time:.2f} Sekunden")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
