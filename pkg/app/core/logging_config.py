"""
Logging-Konfiguration für TSGBT
"""

import logging
import os
import sys
from datetime import datetime
from pathlib import Path

from app.core.debug_manager import get_debug_manager


_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
_DATEFMT = '%Y-%m-%d %H:%M:%S'


def _console_level() -> int:
    """Console: INFO im Debug-Modus, sonst nur Warnungen und Fehler"""
    return logging.INFO if get_debug_manager().is_enabled() else logging.WARNING


def _is_console(handler: logging.Handler) -> bool:
    # FileHandler ist eine Unterklasse von StreamHandler
    return type(handler) is logging.StreamHandler


def _log_dir() -> Path | None:
    """Log-Verzeichnis aus TSGBT_LOG_DIR; 'off' deaktiviert die Datei-Logs"""
    value = os.getenv('TSGBT_LOG_DIR', 'logs')
    if value.strip().lower() in ('off', 'none', ''):
        return None
    return Path(value)


def get_logger(name: str) -> logging.Logger:
    """
    Erstellt einen konfigurierten Logger.
    Console-Ausgaben ab INFO werden nur im Debug-Modus angezeigt.
    Logs werden (sofern nicht deaktiviert) immer in Dateien geschrieben.

    Args:
        name: Name des Loggers (normalerweise __name__)

    Returns:
        Konfigurierter Logger
    """
    logger = logging.getLogger(name)

    if logger.handlers:
        # Logger wurde bereits konfiguriert - aktualisiere nur Console Handler
        for handler in logger.handlers:
            if _is_console(handler):
                handler.setLevel(_console_level())
        return logger

    logger.setLevel(logging.DEBUG)
    logger.propagate = False
    formatter = logging.Formatter(_FORMAT, datefmt=_DATEFMT)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(_console_level())
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    # File Handler - aktiv solange TSGBT_LOG_DIR nicht 'off' ist
    logs_dir = _log_dir()
    if logs_dir is not None:
        try:
            logs_dir.mkdir(parents=True, exist_ok=True)
            log_file = logs_dir / f"tsgbt_{datetime.now().strftime('%Y%m%d')}.log"
            file_handler = logging.FileHandler(log_file, encoding='utf-8')
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)
        except OSError as e:
            logger.warning(f"Log-Datei konnte nicht angelegt werden ({logs_dir}): {e}")

    return logger


def update_all_loggers_for_debug():
    """
    Aktualisiert alle bestehenden Logger basierend auf dem aktuellen Debug-Status.
    Sollte aufgerufen werden, nachdem der Debug-Status gesetzt wurde.
    """
    level = _console_level()
    for logger_name in list(logging.Logger.manager.loggerDict.keys()):
        logger = logging.getLogger(logger_name)
        for handler in logger.handlers[:]:
            if _is_console(handler):
                handler.setLevel(level)
