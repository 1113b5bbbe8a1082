"""
Statische Fehlerliste für TSGBT
Diese Datei enthält alle Fehlercodes mit Beschreibungen und Suchmustern.
Wird für Fehleranalyse und die CLI-Hilfe verwendet.
"""

from typing import Any, Dict, List, Optional


ERROR_DATA: Dict[str, Dict[str, Any]] = {
    "DAT001": {
        "code": "DAT001",
        "name": "DATA_MISSING_COLUMN",
        "description": "Eine im Schema genannte Spalte fehlt in der CSV-Datei",
        "category": "Daten",
        "search_patterns": ["missing column", "spalte fehlt", "keyerror"],
        "common_causes": [
            "Tippfehler im Spaltennamen",
            "Header-Zeile fehlt",
            "Falsches Trennzeichen"
        ],
        "solutions": [
            "Prüfen Sie die Spaltennamen im Schema (--config)",
            "Stellen Sie sicher, dass die erste Zeile ein Header ist"
        ]
    },
    "DAT002": {
        "code": "DAT002",
        "name": "DATA_NON_NUMERIC",
        "description": "Zelle ist nicht numerisch oder fehlt",
        "category": "Daten",
        "search_patterns": ["could not convert", "nicht numerisch", "nan"],
        "common_causes": [
            "Dezimalkomma statt Dezimalpunkt",
            "Fehlende Werte in Kovariaten",
            "Kategoriale Kovariaten"
        ],
        "solutions": [
            "Verwenden Sie '.' als Dezimaltrennzeichen",
            "Imputieren Sie fehlende Werte vor dem Einlesen",
            "Kodieren Sie kategoriale Variablen numerisch"
        ]
    },
    "DAT003": {
        "code": "DAT003",
        "name": "DATA_INVALID_TREATMENT",
        "description": "Behandlungswert außerhalb der Kodierung {-1, +1}",
        "category": "Daten",
        "search_patterns": ["treatment", "behandlung"],
        "common_causes": ["Behandlung als 0/1 kodiert ohne Remap-Flag"],
        "solutions": ["Setzen Sie 'remap_treatment': true im Daten-Schema"]
    },
    "DAT004": {
        "code": "DAT004",
        "name": "DATA_INVALID_OUTCOME",
        "description": "Binärer Outcome außerhalb von {0, 1}",
        "category": "Daten",
        "search_patterns": ["outcome"],
        "common_causes": ["Falscher outcome_kind", "Outcome als 1/2 kodiert"],
        "solutions": ["Prüfen Sie 'outcome_kind' oder kodieren Sie den Outcome um"]
    },
    "DAT005": {
        "code": "DAT005",
        "name": "DATA_INVALID_WEIGHT",
        "description": "Stichprobengewicht nicht positiv",
        "category": "Daten",
        "search_patterns": ["weight", "gewicht"],
        "common_causes": ["Gewicht 0 oder negativ"],
        "solutions": ["Entfernen Sie Zeilen mit Gewicht 0 vor dem Einlesen"]
    },
    "DAT006": {
        "code": "DAT006",
        "name": "DATA_EMPTY",
        "description": "Datensatz oder Behandlungsarm ist leer",
        "category": "Daten",
        "search_patterns": ["empty", "leer"],
        "common_causes": ["Leere Datei", "Nur ein Behandlungsarm vorhanden"],
        "solutions": ["Prüfen Sie die Eingabedatei"]
    },
    "DAT007": {
        "code": "DAT007",
        "name": "DATA_DEGENERATE",
        "description": "Degenerierter Datensatz (z.B. binärer Outcome konstant)",
        "category": "Daten",
        "search_patterns": ["degenerate", "degeneriert"],
        "common_causes": ["Alle Outcomes 0 oder alle 1"],
        "solutions": ["Binäre Analysen benötigen Ereignisse und Nicht-Ereignisse"]
    },
}

ERROR_CONFIG: Dict[str, Dict[str, Any]] = {
    "CFG001": {
        "code": "CFG001",
        "name": "CONFIG_FILE_NOT_FOUND",
        "description": "Konfigurations- oder Eingabedatei nicht gefunden",
        "category": "Konfiguration",
        "search_patterns": ["no such file", "not found"],
        "common_causes": ["Falscher Pfad"],
        "solutions": ["Prüfen Sie --config und --data"]
    },
    "CFG002": {
        "code": "CFG002",
        "name": "CONFIG_INVALID_JSON",
        "description": "Konfigurationsdatei ist kein gültiges JSON",
        "category": "Konfiguration",
        "search_patterns": ["jsondecodeerror", "expecting"],
        "common_causes": ["Fehlendes Komma", "Kommentare im JSON"],
        "solutions": ["Validieren Sie die Datei mit einem JSON-Linter"]
    },
    "CFG003": {
        "code": "CFG003",
        "name": "CONFIG_UNKNOWN_KEY",
        "description": "Unbekannter Schlüssel in der Konfiguration",
        "category": "Konfiguration",
        "search_patterns": ["unknown key", "unbekannt"],
        "common_causes": ["Tippfehler im Schlüssel", "Veraltete Konfiguration"],
        "solutions": ["Vergleichen Sie mit tsgbt_config.json"]
    },
    "CFG004": {
        "code": "CFG004",
        "name": "CONFIG_INVALID_TYPE",
        "description": "Konfigurationswert hat den falschen Typ",
        "category": "Konfiguration",
        "search_patterns": ["invalid type", "typ"],
        "common_causes": ["Zahl als String angegeben"],
        "solutions": ["Verwenden Sie JSON-Zahlen statt Strings"]
    },
    "CFG005": {
        "code": "CFG005",
        "name": "CONFIG_MISSING_KEY",
        "description": "Pflichtschlüssel fehlt in der Konfiguration",
        "category": "Konfiguration",
        "search_patterns": ["missing key", "fehlt"],
        "common_causes": ["Datenschema unvollständig"],
        "solutions": ["Ergänzen Sie 'outcome' und 'treatment' im Schema"]
    },
}

ERROR_VALIDATION: Dict[str, Dict[str, Any]] = {
    "VAL001": {
        "code": "VAL001",
        "name": "VAL_INVALID_INPUT",
        "description": "Ungültige Eingabe für eine Operation",
        "category": "Validierung",
        "search_patterns": ["invalid", "ungültig"],
        "common_causes": ["Leere Eingabe", "Falscher Datentyp"],
        "solutions": ["Prüfen Sie die Argumente"]
    },
    "VAL002": {
        "code": "VAL002",
        "name": "VAL_OUT_OF_RANGE",
        "description": "Parameter außerhalb des zulässigen Bereichs",
        "category": "Validierung",
        "search_patterns": ["range", "bereich"],
        "common_causes": ["p_treat nicht in (0,1)", "learning_rate nicht in (0,1]"],
        "solutions": ["Siehe Wertebereiche in der Dokumentation der BoostParams"]
    },
    "VAL003": {
        "code": "VAL003",
        "name": "VAL_NEGATIVE_HESSIAN",
        "description": "Hesse-Vektor enthält negative Werte",
        "category": "Validierung",
        "search_patterns": ["hessian", "hesse"],
        "common_causes": ["Nicht-konvexe Verlustfunktion"],
        "solutions": ["Verwenden Sie eine der vorgesehenen Verlustfunktionen"]
    },
    "VAL004": {
        "code": "VAL004",
        "name": "VAL_MISALIGNED",
        "description": "Vektoren haben unterschiedliche Länge",
        "category": "Validierung",
        "search_patterns": ["aligned", "länge"],
        "common_causes": ["a0-Datei passt nicht zum Datensatz"],
        "solutions": ["Externe a0-Werte müssen eine Zeile pro Beobachtung haben"]
    },
    "VAL005": {
        "code": "VAL005",
        "name": "VAL_UNKNOWN_IDENTIFIER",
        "description": "Unbekannter Bezeichner (Loss, Setting, Methode)",
        "category": "Validierung",
        "search_patterns": ["unknown", "unbekannt"],
        "common_causes": ["Tippfehler im Bezeichner"],
        "solutions": ["Siehe Liste der gültigen Bezeichner in der CLI-Hilfe"]
    },
}

ERROR_MODEL: Dict[str, Dict[str, Any]] = {
    "MOD001": {
        "code": "MOD001",
        "name": "MODEL_DIMENSION_MISMATCH",
        "description": "Kovariatenzahl passt nicht zum trainierten Modell",
        "category": "Modell",
        "search_patterns": ["dimension", "mismatch"],
        "common_causes": ["Andere Spaltenauswahl beim Vorhersagen"],
        "solutions": ["Verwenden Sie dasselbe Schema wie beim Fit"]
    },
    "MOD002": {
        "code": "MOD002",
        "name": "MODEL_INVALID_FORMAT",
        "description": "Modelldatei hat ein ungültiges Format",
        "category": "Modell",
        "search_patterns": ["format"],
        "common_causes": ["Manuell bearbeitete Modelldatei"],
        "solutions": ["Erzeugen Sie die Modelldatei neu mit 'fit'"]
    },
    "MOD003": {
        "code": "MOD003",
        "name": "MODEL_NOT_FITTED",
        "description": "Modell wurde noch nicht angepasst",
        "category": "Modell",
        "search_patterns": ["not fitted"],
        "common_causes": ["Permutationstest ohne beobachteten Fit"],
        "solutions": ["Führen Sie zuerst 'fit' aus"]
    },
}

ERROR_NUMERIC: Dict[str, Dict[str, Any]] = {
    "NUM001": {
        "code": "NUM001",
        "name": "NUM_UNDEFINED",
        "description": "Kennzahl ist für die Eingabe nicht definiert",
        "category": "Numerik",
        "search_patterns": ["undefined", "constant"],
        "common_causes": ["Spearman-Korrelation für konstanten Vektor"],
        "solutions": ["Prüfen Sie, ob die Schätzungen variieren"]
    },
    "NUM002": {
        "code": "NUM002",
        "name": "NUM_NOT_FINITE",
        "description": "Nicht-endlicher Zahlenwert aufgetreten",
        "category": "Numerik",
        "search_patterns": ["inf", "nan", "overflow"],
        "common_causes": ["Zu großer Lernschritt", "lambda = 0 mit Hesse-Summe 0"],
        "solutions": ["Erhöhen Sie lambda oder min_child_weight"]
    },
}

ERROR_IO: Dict[str, Dict[str, Any]] = {
    "IO001": {
        "code": "IO001",
        "name": "IO_READ_FAILED",
        "description": "Datei konnte nicht gelesen werden",
        "category": "Datei",
        "search_patterns": ["permission", "read"],
        "common_causes": ["Fehlende Leserechte"],
        "solutions": ["Prüfen Sie die Dateirechte"]
    },
    "IO002": {
        "code": "IO002",
        "name": "IO_WRITE_FAILED",
        "description": "Artefakt konnte nicht geschrieben werden",
        "category": "Datei",
        "search_patterns": ["permission", "write", "disk"],
        "common_causes": ["Ausgabeverzeichnis schreibgeschützt"],
        "solutions": ["Wählen Sie ein anderes --out Verzeichnis"]
    },
}

ERROR_GENERAL: Dict[str, Dict[str, Any]] = {
    "GEN001": {
        "code": "GEN001",
        "name": "GEN_UNEXPECTED_ERROR",
        "description": "Unerwarteter Fehler aufgetreten",
        "category": "Allgemein",
        "search_patterns": ["unexpected", "unhandled"],
        "common_causes": ["Programmierfehler"],
        "solutions": ["Prüfen Sie die Logs (TSGBT_LOG_DIR) für den Traceback"]
    },
    "GEN002": {
        "code": "GEN002",
        "name": "GEN_NOT_IMPLEMENTED",
        "description": "Funktion nicht implementiert",
        "category": "Allgemein",
        "search_patterns": ["not implemented"],
        "common_causes": ["Nicht unterstützte Kombination von Optionen"],
        "solutions": ["Siehe Dokumentation der Subcommands"]
    },
}

# Kombinierte Fehlerliste für einfache Suche
ALL_ERRORS: Dict[str, Dict[str, Any]] = {
    **ERROR_DATA,
    **ERROR_CONFIG,
    **ERROR_VALIDATION,
    **ERROR_MODEL,
    **ERROR_NUMERIC,
    **ERROR_IO,
    **ERROR_GENERAL
}


def find_error_by_code(code: str) -> Optional[Dict[str, Any]]:
    """Findet Fehlerinformationen anhand des Codes"""
    return ALL_ERRORS.get(code.upper())


def find_error_by_pattern(text: str) -> List[Dict[str, Any]]:
    """
    Findet Fehler anhand von Suchmustern im Text.

    Args:
        text: Text in dem gesucht werden soll (z.B. Fehlermeldung)

    Returns:
        Liste von gefundenen Fehlern
    """
    text_lower = text.lower()
    found_errors = []
    for error_info in ALL_ERRORS.values():
        for pattern in error_info.get("search_patterns", []):
            if pattern.lower() in text_lower:
                found_errors.append(error_info)
                break
    return found_errors


def get_errors_by_category(category: str) -> List[Dict[str, Any]]:
    """Gibt alle Fehler einer Kategorie zurück"""
    return [
        error_info
        for error_info in ALL_ERRORS.values()
        if error_info.get("category", "").lower() == category.lower()
    ]
