"""
Utilities Package für TSGBT
Hilfsfunktionen für Dateiartefakte
"""

from .io_utils import read_json, write_csv, write_json

__all__ = ['read_json', 'write_csv', 'write_json']
