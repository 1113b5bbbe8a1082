"""
Core-Module für TSGBT
Grundlegende Funktionalitäten wie Logging, Debug und Fehlerbehandlung
"""

from .logging_config import get_logger
from .debug_manager import (
    get_debug_manager,
    is_debug_enabled,
    debug_print
)
from .error_handler import AppError, AppException, ErrorCode, handle_error

__all__ = [
    'get_logger',
    'get_debug_manager',
    'is_debug_enabled',
    'debug_print',
    'AppError',
    'AppException',
    'ErrorCode',
    'handle_error'
]
