"""
Hyperparameter-Presets für TSGBT
Single Point of Truth für alle Boosting-Voreinstellungen
"""

from typing import Any, Dict


class ParamPresets:
    """
    Zentrale Konfiguration für alle Hyperparameter-Presets.
    Werte sind einfache Dictionaries mit den Feldern von BoostParams.
    """

    # Erste Stufe: übliche Bereiche (max_depth 6, eta 0.1, gamma 4, ...)
    STAGE1_DEFAULT = {
        "n_rounds": 500,
        "learning_rate": 0.1,
        "gamma": 4.0,
        "reg_lambda": 1.0,
        "max_depth": 6,
        "min_child_weight": 2.0,
        "subsample": 0.6,
        "colsample": 0.7,
        "seed": 0,
    }

    # Zweite Stufe: konservativ (gamma 8, min_child_weight 12)
    STAGE2_DEFAULT = {
        "n_rounds": 1000,
        "learning_rate": 0.01,
        "gamma": 8.0,
        "reg_lambda": 1.0,
        "max_depth": 4,
        "min_child_weight": 12.0,
        "subsample": 0.6,
        "colsample": 0.7,
        "seed": 0,
    }

    PRESETS: Dict[str, Dict[str, Any]] = {
        "stage1_default": STAGE1_DEFAULT,
        "stage2_default": STAGE2_DEFAULT,
        # Getrennte Arme: Standard-Loss je Arm, Einstellungen wie Stufe 1
        "sgbt_default": STAGE1_DEFAULT,
        # Kleine, schnelle Einstellungen für Tests und Smoke-Läufe
        "test_fast": {
            "n_rounds": 50,
            "learning_rate": 0.3,
            "gamma": 0.0,
            "reg_lambda": 1.0,
            "max_depth": 2,
            "min_child_weight": 1.0,
            "subsample": 1.0,
            "colsample": 1.0,
            "seed": 0,
        },
    }

    @classmethod
    def get_preset(cls, key: str) -> Dict[str, Any]:
        """
        Gibt eine Kopie des Presets für einen Schlüssel zurück.

        Args:
            key: Preset-Schlüssel (z.B. "stage1_default", "stage2_default")

        Returns:
            Dictionary mit BoostParams-Feldern

        Raises:
            KeyError: Wenn der Preset-Schlüssel nicht gefunden wird
        """
        if key not in cls.PRESETS:
            raise KeyError(f"Preset '{key}' nicht gefunden. Verfügbare Presets: {list(cls.PRESETS.keys())}")
        return dict(cls.PRESETS[key])

    @classmethod
    def get_all_presets(cls) -> Dict[str, Dict[str, Any]]:
        """Gibt alle Presets als Dictionary zurück"""
        return {key: dict(value) for key, value in cls.PRESETS.items()}
