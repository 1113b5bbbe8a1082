"""
App-Initialisierung für TSGBT
Hauptmodul für die Kommandozeile
"""

from typing import List, Optional

from .core.error_handler import install_global_exception_handler


def main(argv: Optional[List[str]] = None) -> int:
    """Hauptfunktion der Anwendung; gibt den Exit-Code zurück"""
    install_global_exception_handler()

    from .ui.cli import main as cli_main
    return cli_main(argv)
