"""
Configuration Manager Modul

Dieses Modul verwaltet die Konfiguration aus der configuration.ini Datei.
Es stellt Methoden zum Lesen, Validieren und Bereitstellen von Konfigurationswerten bereit.

Jede Stufe der Pipeline liest ihren eigenen Abschnitt ([SNS], [Completion], [Refinement],
[Texturing], [Metrics]); Kommandozeilenoptionen überschreiben Dateiwerte, Dateiwerte
überschreiben die Standardwerte der Module.
"""

import os
import hashlib
import configparser
import logging
from typing import Any, Dict, List, Optional, Tuple

# Logger konfigurieren
logger = logging.getLogger(__name__)


class ConfigManager:
    """
    Klasse für die Verwaltung der Konfigurationsdatei.
    Bietet Methoden zum Lesen, Validieren und Abfragen von Konfigurationswerten.
    """

    # Einstellungen, ohne die run_pipeline nicht starten kann
    PIPELINE_REQUIRED = [
        ('Pipeline', 'template'),
        ('Pipeline', 'target'),
        ('Pipeline', 'output_dir'),
    ]

    def __init__(self, config_file: Optional[str] = 'configuration.ini'):
        """
        Initialisiert den ConfigManager und lädt die Konfigurationsdatei.

        Args:
            config_file: Pfad zur Konfigurationsdatei; None erzeugt eine leere Konfiguration,
                so dass alle Module ihre Standardwerte verwenden.

        Raises:
            FileNotFoundError: Wenn die Konfigurationsdatei nicht gefunden wird.
            configparser.Error: Bei Fehlern beim Parsen der Konfigurationsdatei.
        """
        self.config_file = config_file
        self.config = configparser.ConfigParser(interpolation=configparser.BasicInterpolation(),
                                                inline_comment_prefixes=('#', ';'))

        if config_file is None:
            return

        if not os.path.exists(config_file):
            example_file = f"{config_file}.example"
            if os.path.exists(example_file):
                error_msg = (
                    f"Konfigurationsdatei '{config_file}' nicht gefunden.\n"
                    f"Bitte kopieren Sie die Beispielkonfigurationsdatei '{example_file}' "
                    f"zu '{config_file}' und passen Sie die Werte an."
                )
            else:
                error_msg = f"Konfigurationsdatei '{config_file}' nicht gefunden."

            raise FileNotFoundError(error_msg)

        try:
            self.config.read(config_file, encoding='utf-8')
        except configparser.Error as e:
            raise configparser.Error(f"Fehler beim Lesen der Konfigurationsdatei '{config_file}': {str(e)}")

    @classmethod
    def from_dict(cls, sections: Dict[str, Dict[str, Any]]) -> "ConfigManager":
        """Erzeugt eine Konfiguration aus einem verschachtelten Dictionary."""
        manager = cls(None)
        for section, options in sections.items():
            for option, value in options.items():
                manager.set(section, option, value)
        return manager

    @property
    def base_dir(self) -> str:
        """Verzeichnis der Konfigurationsdatei; relative Pfade werden dagegen aufgelöst."""
        if self.config_file is None:
            return os.getcwd()
        return os.path.dirname(os.path.abspath(self.config_file))

    def resolve_path(self, value: Optional[str]) -> Optional[str]:
        if not value:
            return value
        if os.path.isabs(value):
            return value
        return os.path.normpath(os.path.join(self.base_dir, value))

    def validate_required_settings(self, required: Optional[List[Tuple[str, str]]] = None) -> None:
        """
        Überprüft, ob alle erforderlichen Einstellungen vorhanden sind.

        Raises:
            ValueError: Wenn erforderliche Einstellungen fehlen (mit Namen der Felder).
        """
        required = self.PIPELINE_REQUIRED if required is None else required
        missing_settings = [f"{section}.{option}" for section, option in required
                            if not str(self.get(section, option, '')).strip()]
        if missing_settings:
            raise ValueError(
                f"Fehlende erforderliche Einstellungen in '{self.config_file}': "
                f"{', '.join(missing_settings)}"
            )

    def require(self, section: str, option: str) -> str:
        """
        Liefert einen Pflichtwert.

        Raises:
            ValueError: Wenn der Wert fehlt oder leer ist; die Meldung nennt Section.option.
        """
        value = self.get(section, option, '')
        if value is None or not str(value).strip():
            raise ValueError(f"Fehlende erforderliche Einstellung: {section}.{option}")
        return value

    def get(self, section: str, option: str, fallback: Any = None) -> str:
        """
        Ruft einen Wert aus der Konfiguration ab.

        Args:
            section: Der Abschnitt in der Konfigurationsdatei
            option: Die Option im Abschnitt
            fallback: Standardwert, falls die Option nicht existiert

        Returns:
            str: Der Wert aus der Konfiguration oder der Fallback-Wert
        """
        if self.has_option(section, option):
            return self.config.get(section, option)
        return fallback

    def getint(self, section: str, option: str, fallback: int = None) -> int:
        """Ruft einen Integer-Wert aus der Konfiguration ab."""
        if self.has_option(section, option):
            return self.config.getint(section, option)
        return fallback

    def getfloat(self, section: str, option: str, fallback: float = None) -> float:
        """Ruft einen Float-Wert aus der Konfiguration ab."""
        if self.has_option(section, option):
            return self.config.getfloat(section, option)
        return fallback

    def getboolean(self, section: str, option: str, fallback: bool = None) -> bool:
        """Ruft einen Boolean-Wert aus der Konfiguration ab."""
        if self.has_option(section, option):
            return self.config.getboolean(section, option)
        return fallback

    def getlist(self, section: str, option: str, fallback: List = None, delimiter: str = ',') -> List[str]:
        """
        Ruft eine Liste aus der Konfiguration ab.
        Die Liste wird als durch Komma getrennte Werte gespeichert.

        Args:
            section: Der Abschnitt in der Konfigurationsdatei
            option: Die Option im Abschnitt
            fallback: Standardwert, falls die Option nicht existiert
            delimiter: Trennzeichen für die Liste (Standard: Komma)

        Returns:
            List[str]: Liste von Werten aus der Konfiguration oder der Fallback-Wert
        """
        if self.has_option(section, option):
            value = self.get(section, option)
            if value:
                return [item.strip() for item in value.split(delimiter) if item.strip()]
            return []
        return fallback if fallback is not None else []

    def has_section(self, section: str) -> bool:
        return self.config.has_section(section)

    def has_option(self, section: str, option: str) -> bool:
        """Leere Werte (z. B. "range =") gelten als nicht gesetzt."""
        if not (self.config.has_section(section) and self.config.has_option(section, option)):
            return False
        return self.config.get(section, option, raw=True).strip() != ''

    def set(self, section: str, option: str, value: Any) -> None:
        """
        Setzt einen Wert in der Konfiguration.

        Args:
            section: Der Abschnitt in der Konfigurationsdatei
            option: Die Option im Abschnitt
            value: Der zu setzende Wert
        """
        if not self.config.has_section(section):
            self.config.add_section(section)

        self.config.set(section, option, str(value))

    def save(self, config_file: str = None) -> None:
        """
        Speichert die Konfiguration in einer Datei.

        Raises:
            IOError: Bei Fehlern beim Schreiben der Datei.
        """
        if not config_file:
            config_file = self.config_file

        try:
            with open(config_file, 'w', encoding='utf-8') as file:
                self.config.write(file)
        except IOError as e:
            raise IOError(f"Fehler beim Speichern der Konfiguration in '{config_file}': {str(e)}")

    def config_hash(self) -> str:
        """SHA-256 über die sortierte Ausgabe aller Abschnitte und Optionen."""
        lines = []
        for section in sorted(self.config.sections()):
            for option, value in sorted(self.config[section].items()):
                lines.append(f"[{section}] {option} = {value}")
        return hashlib.sha256('\n'.join(lines).encode('utf-8')).hexdigest()

    def validate_config(self) -> Tuple[bool, List[str]]:
        """
        Validiert die gesamte Konfiguration auf Richtigkeit und Konsistenz.

        Returns:
            Tuple[bool, List[str]]: (Ist gültig, Liste von Fehlermeldungen)
        """
        is_valid = True
        errors = []

        # Validiere Ausgabeverzeichnis
        output_dir = self.get('Pipeline', 'output_dir', '')
        if output_dir:
            invalid_chars = '<>"|?*'
            if any(char in output_dir for char in invalid_chars):
                is_valid = False
                errors.append(f"Pipeline.output_dir enthält ungültige Zeichen: {invalid_chars}")

        # Validiere Zahlenwerte
        numeric_settings = [
            ('SNS', 'theta', 0.0, 3.1416),
            ('SNS', 'area_ratio', 0.0, 1e9),
            ('SNS', 'edge_ratio', 1.0, 1e9),
            ('SNS', 'min_component', 0, 1e12),
            ('SNS', 'range', 0.0, 1e6),
            ('SNS', 'range_fraction', 0.0, 10.0),
            ('SNS', 'sdf_step', 0.0, 1e6),
            ('Completion', 'tolerance', 0.0, 1.0),
            ('Completion', 'max_iterations', 1, 1e9),
            ('Completion', 'dilate', 0, 1000),
            ('Completion', 'blend_band', 0, 1000),
            ('Refinement', 'smooth_lambda', 0.0, 1.0),
            ('Refinement', 'smooth_iters', 0, 10000),
            ('Texturing', 'erode_margin', 0, 1000),
            ('Texturing', 'icp_iters', 1, 100000),
            ('Metrics', 'resolution', 1, 8192),
            ('Advanced', 'workers', 1, 1024),
        ]

        for section, option, min_val, max_val in numeric_settings:
            if self.has_option(section, option):
                try:
                    val = self.getfloat(section, option)
                    if val < min_val or val > max_val:
                        is_valid = False
                        errors.append(f"{section}.{option} muss zwischen {min_val} und {max_val} liegen.")
                except ValueError:
                    is_valid = False
                    errors.append(f"{section}.{option} muss eine Zahl sein.")

        for section, option in [('Pipeline', 'uv_resolution'), ('Texturing', 'resolution')]:
            if self.has_option(section, option):
                try:
                    val = self.getint(section, option)
                    if val < 1 or val > 4096 or val & (val - 1):
                        is_valid = False
                        errors.append(f"{section}.{option} muss eine Zweierpotenz zwischen 1 und 4096 sein.")
                except ValueError:
                    is_valid = False
                    errors.append(f"{section}.{option} muss eine ganze Zahl sein.")

        return is_valid, errors


# Globale Hilfsfunktion zum einfachen Laden der Konfiguration
def load_config(config_file: Optional[str] = 'configuration.ini') -> ConfigManager:
    """
    Lädt die Konfiguration aus einer Datei.

    Args:
        config_file: Pfad zur Konfigurationsdatei (None für reine Standardwerte)

    Returns:
        ConfigManager: Eine Instanz des ConfigManagers mit geladener Konfiguration
    """
    return ConfigManager(config_file)
