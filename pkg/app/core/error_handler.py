"""
Error Handling System für TSGBT
Zentrales Fehlerbehandlungssystem mit Fehlercodes und strukturierten Fehlermeldungen
"""

import json
import sys
import traceback
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional

from app.core.logging_config import get_logger

logger = get_logger(__name__)


class ErrorCode(Enum):
    """Zentrale Fehlercodes für die gesamte Anwendung"""

    # Datensatz-Fehler
    DATA_MISSING_COLUMN = "DAT001"
    DATA_NON_NUMERIC = "DAT002"
    DATA_INVALID_TREATMENT = "DAT003"
    DATA_INVALID_OUTCOME = "DAT004"
    DATA_INVALID_WEIGHT = "DAT005"
    DATA_EMPTY = "DAT006"
    DATA_DEGENERATE = "DAT007"

    # Konfigurations-Fehler
    CONFIG_FILE_NOT_FOUND = "CFG001"
    CONFIG_INVALID_JSON = "CFG002"
    CONFIG_UNKNOWN_KEY = "CFG003"
    CONFIG_INVALID_TYPE = "CFG004"
    CONFIG_MISSING_KEY = "CFG005"

    # Validierungs-Fehler
    VAL_INVALID_INPUT = "VAL001"
    VAL_OUT_OF_RANGE = "VAL002"
    VAL_NEGATIVE_HESSIAN = "VAL003"
    VAL_MISALIGNED = "VAL004"
    VAL_UNKNOWN_IDENTIFIER = "VAL005"

    # Modell-Fehler
    MODEL_DIMENSION_MISMATCH = "MOD001"
    MODEL_INVALID_FORMAT = "MOD002"
    MODEL_NOT_FITTED = "MOD003"

    # Numerische Fehler
    NUM_UNDEFINED = "NUM001"
    NUM_NOT_FINITE = "NUM002"

    # Datei-Fehler
    IO_READ_FAILED = "IO001"
    IO_WRITE_FAILED = "IO002"

    # Allgemeine Fehler
    GEN_UNEXPECTED_ERROR = "GEN001"
    GEN_NOT_IMPLEMENTED = "GEN002"


@dataclass
class AppError:
    """Strukturierte Fehlerinformation"""
    code: ErrorCode
    message: str
    details: Optional[str] = None
    original_exception: Optional[Exception] = None
    context: Optional[Dict[str, Any]] = None

    def to_dict(self) -> Dict[str, Any]:
        """Konvertiert Fehler zu Dictionary"""
        return {
            'code': self.code.value,
            'message': self.message,
            'details': self.details,
            'context': self.context
        }

    def __str__(self) -> str:
        """String-Repräsentation des Fehlers"""
        result = f"[{self.code.value}] {self.message}"
        if self.details:
            result += f"\nDetails: {self.details}"
        return result


class AppException(Exception):
    """
    Exception der Bibliothek. Trägt einen AppError mit Code und Kontext,
    damit Aufrufer (CLI, Tests) gezielt auf den Fehlercode prüfen können.
    """

    def __init__(
        self,
        code: ErrorCode,
        message: str,
        context: Optional[Dict[str, Any]] = None,
        details: Optional[str] = None
    ):
        super().__init__(f"[{code.value}] {message}")
        self.error = AppError(code=code, message=message, details=details, context=context)

    @property
    def code(self) -> ErrorCode:
        return self.error.code

    @property
    def context(self) -> Dict[str, Any]:
        return self.error.context or {}


class ErrorHandler:
    """Zentraler Fehlerhandler für die Anwendung"""

    # Fehler-Mapping: Exception-Typen zu ErrorCodes
    ERROR_MAPPING: Dict[str, ErrorCode] = {
        'json.decoder.JSONDecodeError': ErrorCode.CONFIG_INVALID_JSON,
        'JSONDecodeError': ErrorCode.CONFIG_INVALID_JSON,
        'FileNotFoundError': ErrorCode.CONFIG_FILE_NOT_FOUND,
        'PermissionError': ErrorCode.IO_WRITE_FAILED,
        'IsADirectoryError': ErrorCode.IO_READ_FAILED,
        'pandas.errors.ParserError': ErrorCode.DATA_NON_NUMERIC,
        'pandas.errors.EmptyDataError': ErrorCode.DATA_EMPTY,
        'FloatingPointError': ErrorCode.NUM_NOT_FINITE,
        'ZeroDivisionError': ErrorCode.NUM_UNDEFINED,
        'NotImplementedError': ErrorCode.GEN_NOT_IMPLEMENTED,
    }

    MESSAGES: Dict[ErrorCode, str] = {
        ErrorCode.DATA_MISSING_COLUMN: "Spalte fehlt in der Eingabedatei",
        ErrorCode.DATA_NON_NUMERIC: "Nicht-numerischer Wert in der Eingabedatei",
        ErrorCode.DATA_INVALID_TREATMENT: "Ungültige Behandlungskodierung",
        ErrorCode.DATA_INVALID_OUTCOME: "Ungültiger Outcome-Wert",
        ErrorCode.DATA_INVALID_WEIGHT: "Ungültiges Stichprobengewicht",
        ErrorCode.DATA_EMPTY: "Leerer Datensatz",
        ErrorCode.DATA_DEGENERATE: "Degenerierter Datensatz",
        ErrorCode.CONFIG_FILE_NOT_FOUND: "Konfigurationsdatei nicht gefunden",
        ErrorCode.CONFIG_INVALID_JSON: "Ungültige JSON-Konfiguration",
        ErrorCode.CONFIG_UNKNOWN_KEY: "Unbekannter Konfigurationsschlüssel",
        ErrorCode.CONFIG_INVALID_TYPE: "Ungültiger Typ in der Konfiguration",
        ErrorCode.CONFIG_MISSING_KEY: "Konfigurationsschlüssel fehlt",
        ErrorCode.VAL_INVALID_INPUT: "Ungültige Eingabe",
        ErrorCode.VAL_OUT_OF_RANGE: "Wert außerhalb des Bereichs",
        ErrorCode.VAL_NEGATIVE_HESSIAN: "Negative Hesse-Werte",
        ErrorCode.VAL_MISALIGNED: "Vektoren nicht zeilengleich",
        ErrorCode.VAL_UNKNOWN_IDENTIFIER: "Unbekannter Bezeichner",
        ErrorCode.MODEL_DIMENSION_MISMATCH: "Dimension passt nicht zum Modell",
        ErrorCode.MODEL_INVALID_FORMAT: "Ungültiges Modellformat",
        ErrorCode.MODEL_NOT_FITTED: "Modell ist nicht angepasst",
        ErrorCode.NUM_UNDEFINED: "Größe ist nicht definiert",
        ErrorCode.NUM_NOT_FINITE: "Nicht-endlicher Zahlenwert",
        ErrorCode.IO_READ_FAILED: "Datei konnte nicht gelesen werden",
        ErrorCode.IO_WRITE_FAILED: "Datei konnte nicht geschrieben werden",
        ErrorCode.GEN_UNEXPECTED_ERROR: "Unerwarteter Fehler aufgetreten",
        ErrorCode.GEN_NOT_IMPLEMENTED: "Funktion nicht implementiert",
    }

    @staticmethod
    def handle_exception(
        exception: Exception,
        error_code: Optional[ErrorCode] = None,
        context: Optional[Dict[str, Any]] = None,
        log_level: str = "error"
    ) -> AppError:
        """
        Behandelt eine Exception und erstellt strukturierte Fehlerinformation.

        Args:
            exception: Die aufgetretene Exception
            error_code: Optionaler spezifischer Fehlercode
            context: Zusätzlicher Kontext (z.B. Datei, Zeile, Spalte)
            log_level: Logging-Level ('debug', 'info', 'warning', 'error', 'critical')

        Returns:
            AppError mit strukturierten Fehlerinformationen
        """
        if isinstance(exception, AppException):
            app_error = exception.error
            merged = dict(app_error.context or {})
            merged.update(context or {})
            app_error = AppError(
                code=error_code or app_error.code,
                message=app_error.message,
                details=app_error.details,
                original_exception=exception,
                context=merged or None
            )
        else:
            if error_code is None:
                error_code = ErrorHandler._determine_error_code(exception)
            app_error = AppError(
                code=error_code,
                message=ErrorHandler.MESSAGES.get(error_code, f"Fehler: {exception}"),
                details=str(exception) or None,
                original_exception=exception,
                context=context
            )

        ErrorHandler._log_error(app_error, log_level)
        return app_error

    @staticmethod
    def _determine_error_code(exception: Exception) -> ErrorCode:
        """Bestimmt Fehlercode basierend auf Exception-Typ"""
        exception_type = type(exception).__name__
        full_name = f"{type(exception).__module__}.{exception_type}"

        if full_name in ErrorHandler.ERROR_MAPPING:
            return ErrorHandler.ERROR_MAPPING[full_name]
        if exception_type in ErrorHandler.ERROR_MAPPING:
            return ErrorHandler.ERROR_MAPPING[exception_type]

        if isinstance(exception, OSError):
            return ErrorCode.IO_READ_FAILED
        if isinstance(exception, (ValueError, TypeError)):
            return ErrorCode.VAL_INVALID_INPUT
        return ErrorCode.GEN_UNEXPECTED_ERROR

    @staticmethod
    def _log_error(app_error: AppError, log_level: str = "error"):
        """Loggt Fehler mit entsprechendem Level"""
        log_message = f"[{app_error.code.value}] {app_error.message}"
        if app_error.details:
            log_message += f" - {app_error.details}"
        if app_error.context:
            log_message += f" - Context: {json.dumps(app_error.context, default=str, sort_keys=True)}"

        exc = app_error.original_exception
        if exc is not None and not isinstance(exc, AppException):
            log_message += f"\nOriginal Exception: {type(exc).__name__}"
            log_message += "\nTraceback:\n" + "".join(
                traceback.format_exception(type(exc), exc, exc.__traceback__)
            )

        log_func = getattr(logger, log_level, logger.error)
        log_func(log_message)


def handle_error(
    exception: Exception,
    error_code: Optional[ErrorCode] = None,
    context: Optional[Dict[str, Any]] = None,
    log_level: str = "error"
) -> AppError:
    """
    Convenience-Funktion für Fehlerbehandlung.

    Usage:
        try:
            # Code
        except Exception as e:
            error = handle_error(e, context={'path': str(path)})
            return False, error.message, {}
    """
    return ErrorHandler.handle_exception(exception, error_code, context, log_level)


def get_error_category(error_code: ErrorCode) -> str:
    """Gibt Kategorie eines Fehlercodes zurück"""
    prefixes = {
        'DAT': 'Daten',
        'CFG': 'Konfiguration',
        'VAL': 'Validierung',
        'MOD': 'Modell',
        'NUM': 'Numerik',
        'IO': 'Datei',
    }
    for prefix, category in prefixes.items():
        if error_code.value.startswith(prefix):
            return category
    return 'Allgemein'


def get_error_info(error_code: ErrorCode) -> Dict[str, str]:
    """Gibt Informationen zu einem Fehlercode zurück"""
    return {
        'code': error_code.value,
        'description': ErrorHandler.MESSAGES.get(error_code, error_code.name),
        'category': get_error_category(error_code)
    }


def install_global_exception_handler():
    """
    Installiert einen globalen Exception Handler, der alle unbehandelten
    Exceptions protokolliert. Wird beim CLI-Start aufgerufen.
    """
    original_excepthook = sys.excepthook

    def global_exception_handler(exc_type, exc_value, exc_traceback):
        if issubclass(exc_type, KeyboardInterrupt):
            original_excepthook(exc_type, exc_value, exc_traceback)
            return
        exception = exc_value if exc_value is not None else exc_type()
        handle_error(
            exception,
            error_code=ErrorCode.GEN_UNEXPECTED_ERROR,
            context={'exception_type': exc_type.__name__, 'unhandled': True},
            log_level="critical"
        )
        original_excepthook(exc_type, exc_value, exc_traceback)

    sys.excepthook = global_exception_handler
    logger.debug("Globaler Exception Handler installiert")
