"""
IO Utils für TSGBT
Deterministisches Schreiben und Lesen von JSON- und CSV-Artefakten
"""

import json
from pathlib import Path
from typing import Any, Union

import pandas as pd

from app.config import DEFAULT_CONFIG
from app.core.error_handler import AppException, ErrorCode

FLOAT_FORMAT = DEFAULT_CONFIG["output"]["float_format"]


def _ensure_parent(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise AppException(ErrorCode.IO_WRITE_FAILED, f"Verzeichnis nicht anlegbar: {path.parent}",
                           context={'path': str(path.parent)}, details=str(e))


def write_json(path: Union[str, Path], payload: Any) -> Path:
    """Schreibt JSON mit sortierten Schlüsseln und festem Zeilenende"""
    path = Path(path)
    _ensure_parent(path)
    try:
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(payload, f, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=True)
            f.write('\n')
    except OSError as e:
        raise AppException(ErrorCode.IO_WRITE_FAILED, f"JSON nicht schreibbar: {path}",
                           context={'path': str(path)}, details=str(e))
    return path


def read_json(path: Union[str, Path]) -> Any:
    """
    Liest eine JSON-Datei.

    Raises:
        AppException: CFG001 wenn die Datei fehlt, CFG002 bei ungültigem JSON
    """
    path = Path(path)
    if not path.exists():
        raise AppException(ErrorCode.CONFIG_FILE_NOT_FOUND, f"Datei nicht gefunden: {path}",
                           context={'path': str(path)})
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise AppException(ErrorCode.CONFIG_INVALID_JSON, f"Ungültiges JSON in {path.name}",
                           context={'path': str(path), 'line': e.lineno, 'column': e.colno},
                           details=e.msg)
    except OSError as e:
        raise AppException(ErrorCode.IO_READ_FAILED, f"Datei nicht lesbar: {path}",
                           context={'path': str(path)}, details=str(e))


def write_csv(path: Union[str, Path], frame: pd.DataFrame) -> Path:
    """Schreibt eine Tabelle ohne Index mit voller Gleitkommapräzision"""
    path = Path(path)
    _ensure_parent(path)
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n', encoding='utf-8')
    except OSError as e:
        raise AppException(ErrorCode.IO_WRITE_FAILED, f"CSV nicht schreibbar: {path}",
                           context={'path': str(path)}, details=str(e))
    return path
