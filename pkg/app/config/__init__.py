"""
Config-Modul für TSGBT
Zentrale Konfigurationsdatei für alle Einstellungen
"""

import os

from dotenv import load_dotenv

# .env im Arbeitsverzeichnis (optional) - Umgebungsvariablen haben Vorrang
load_dotenv(override=False)

from .presets import ParamPresets  # noqa: E402

# Standard-Konfiguration
DEFAULT_CONFIG = {
    "app_name": "TSGBT - Two-Stage Gradient Boosting Trees",
    "default_threads": 1,
    "cv": {
        "n_folds": 10,
        "patience": 20
    },
    "permutation": {
        "n_permutations": 200,
        "stat_kind": "variance"
    },
    "output": {
        "float_format": "%.17g"
    }
}


def get_default_threads() -> int:
    """
    Standard-Threadanzahl aus TSGBT_THREADS.
    Ungültige Werte fallen auf den Default aus DEFAULT_CONFIG zurück.
    """
    raw = os.getenv("TSGBT_THREADS", "").strip()
    if raw:
        try:
            value = int(raw)
            if value != 0:
                return value
        except ValueError:
            pass
    return DEFAULT_CONFIG["default_threads"]


__all__ = [
    'ParamPresets',
    'DEFAULT_CONFIG',
    'get_default_threads'
]
