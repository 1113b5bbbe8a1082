"""
Data Service für TSGBT
Studiendatensatz, Behandlungskodierung, Randomisierungsgewichte und CSV-Import
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.core.error_handler import AppException, ErrorCode
from app.core.logging_config import get_logger

logger = get_logger(__name__)

OUTCOME_KINDS = ("continuous", "binary")


def _check_p_treat(p_treat: float):
    if not (0.0 < float(p_treat) < 1.0):
        raise AppException(
            ErrorCode.VAL_OUT_OF_RANGE,
            f"p_treat muss in (0,1) liegen, erhalten: {p_treat}",
            context={'p_treat': p_treat}
        )


@dataclass(frozen=True)
class RandWeight:
    """Randomisierungsgewicht w_i eines einzelnen Teilnehmers"""
    value: float

    def __float__(self) -> float:
        return self.value


def rand_weight(t: Union[int, np.ndarray], p_treat: float) -> Union[RandWeight, np.ndarray]:
    """
    Inverses Randomisierungsgewicht w = (t+1)/(2p) - (t-1)/(2(1-p)).

    Skalare Eingabe liefert RandWeight, Vektoren liefern ein numpy-Array.

    Raises:
        AppException: p_treat außerhalb von (0,1) oder t nicht in {-1,+1}
    """
    _check_p_treat(p_treat)
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isin(t_arr, (-1.0, 1.0))):
        raise AppException(
            ErrorCode.DATA_INVALID_TREATMENT,
            "Behandlung muss in {-1, +1} kodiert sein",
        )
    w = (t_arr + 1.0) / (2.0 * p_treat) - (t_arr - 1.0) / (2.0 * (1.0 - p_treat))
    if t_arr.ndim == 0:
        return RandWeight(float(w))
    return w


@dataclass(frozen=True)
class TrialDataset:
    """
    Randomisierter Studiendatensatz.

    Behandlung ist intern ausschließlich als -1/+1 gespeichert; Arrays werden
    beim Anlegen schreibgeschützt. Zeilen und Spalten in Fehlermeldungen zählen ab 1,
    wie beim CSV-Import.
    """
    y: np.ndarray
    t: np.ndarray
    x: np.ndarray
    p_treat: float = 0.5
    w_sample: Optional[np.ndarray] = None
    outcome_kind: str = "continuous"
    feature_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        t = np.asarray(self.t, dtype=float).ravel()
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        n = y.shape[0]
        if n == 0:
            raise AppException(ErrorCode.DATA_EMPTY, "Datensatz enthält keine Zeilen")
        if t.shape[0] != n or x.shape[0] != n:
            raise AppException(
                ErrorCode.VAL_MISALIGNED,
                "y, t und x müssen dieselbe Zeilenzahl haben",
                context={'n_y': n, 'n_t': int(t.shape[0]), 'n_x': int(x.shape[0])}
            )
        if self.outcome_kind not in OUTCOME_KINDS:
            raise AppException(
                ErrorCode.VAL_UNKNOWN_IDENTIFIER,
                f"Unbekannter outcome_kind '{self.outcome_kind}'",
                context={'allowed': list(OUTCOME_KINDS)}
            )
        _check_p_treat(self.p_treat)

        bad_t = np.flatnonzero(~np.isin(t, (-1.0, 1.0)))
        if bad_t.size:
            raise AppException(
                ErrorCode.DATA_INVALID_TREATMENT,
                f"Behandlungswert {t[bad_t[0]]} in Zeile {int(bad_t[0]) + 1} außerhalb von {{-1, +1}}",
                context={'row': int(bad_t[0]) + 1}
            )
        if self.outcome_kind == "binary":
            bad_y = np.flatnonzero(~np.isin(y, (0.0, 1.0)))
            if bad_y.size:
                raise AppException(
                    ErrorCode.DATA_INVALID_OUTCOME,
                    f"Binärer Outcome {y[bad_y[0]]} in Zeile {int(bad_y[0]) + 1} außerhalb von {{0, 1}}",
                    context={'row': int(bad_y[0]) + 1}
                )
        if not np.all(np.isfinite(x)):
            row, col = np.argwhere(~np.isfinite(x))[0]
            raise AppException(
                ErrorCode.DATA_NON_NUMERIC,
                f"Fehlender oder nicht-endlicher Kovariatenwert in Zeile {int(row) + 1}, Spalte {int(col) + 1}",
                context={'row': int(row) + 1, 'column': int(col) + 1}
            )
        if not np.all(np.isfinite(y)):
            row = int(np.flatnonzero(~np.isfinite(y))[0]) + 1
            raise AppException(
                ErrorCode.DATA_NON_NUMERIC,
                f"Fehlender Outcome in Zeile {row}",
                context={'row': row}
            )

        if self.w_sample is None:
            w = np.ones(n)
        else:
            w = np.asarray(self.w_sample, dtype=float).ravel()
            if w.shape[0] != n:
                raise AppException(ErrorCode.VAL_MISALIGNED, "Gewichtsvektor passt nicht zur Zeilenzahl")
            bad_w = np.flatnonzero(~(w > 0))
            if bad_w.size:
                raise AppException(
                    ErrorCode.DATA_INVALID_WEIGHT,
                    f"Stichprobengewicht in Zeile {int(bad_w[0]) + 1} ist nicht positiv",
                    context={'row': int(bad_w[0]) + 1}
                )

        names = list(self.feature_names) or [f"x{j + 1}" for j in range(x.shape[1])]
        if len(names) != x.shape[1]:
            raise AppException(
                ErrorCode.VAL_MISALIGNED,
                "Anzahl Kovariatennamen passt nicht zur Spaltenzahl",
                context={'names': len(names), 'columns': int(x.shape[1])}
            )

        for arr in (y, t, x, w):
            arr.setflags(write=False)
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 't', t)
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'w_sample', w)
        object.__setattr__(self, 'p_treat', float(self.p_treat))
        object.__setattr__(self, 'feature_names', names)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def p(self) -> int:
        return int(self.x.shape[1])

    @property
    def rand_weights(self) -> np.ndarray:
        """Randomisierungsgewichte w_i aller Zeilen"""
        return rand_weight(self.t, self.p_treat)

    @property
    def combined_weights(self) -> np.ndarray:
        """Randomisierungsgewicht × Stichprobengewicht W_i"""
        return self.rand_weights * self.w_sample

    def subset(self, rows: Sequence[int]) -> "TrialDataset":
        """Teildatensatz mit den angegebenen Zeilen (Reihenfolge bleibt erhalten)"""
        rows = np.asarray(rows, dtype=int)
        return TrialDataset(
            y=self.y[rows], t=self.t[rows], x=self.x[rows], p_treat=self.p_treat,
            w_sample=self.w_sample[rows], outcome_kind=self.outcome_kind,
            feature_names=list(self.feature_names)
        )

    def with_x(self, x: np.ndarray) -> "TrialDataset":
        """Kopie mit ersetzter Kovariatenmatrix (y, t, w unverändert)"""
        return TrialDataset(
            y=self.y, t=self.t, x=x, p_treat=self.p_treat, w_sample=self.w_sample,
            outcome_kind=self.outcome_kind, feature_names=list(self.feature_names)
        )


@dataclass
class CsvSchema:
    """Spaltenzuordnung für den CSV-Import"""
    outcome: str
    treatment: str
    covariates: Optional[List[str]] = None
    weight: Optional[str] = None
    outcome_kind: str = "continuous"
    p_treat: float = 0.5
    remap_treatment: bool = False
    case_control_population_controls: Optional[float] = None
    exclude: Optional[List[str]] = None


def _numeric_column(frame: pd.DataFrame, column: str, path: Path) -> np.ndarray:
    """Wandelt eine Spalte in float um und meldet die erste fehlerhafte Zelle"""
    values = pd.to_numeric(frame[column], errors='coerce')
    bad = values.isna().to_numpy()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise AppException(
            ErrorCode.DATA_NON_NUMERIC,
            f"Nicht-numerischer oder fehlender Wert '{frame[column].iloc[row]}' "
            f"in Zeile {row + 1}, Spalte '{column}'",
            context={'file': str(path), 'row': row + 1, 'column': column}
        )
    return values.to_numpy(dtype=float)


def load_csv(path: Union[str, Path], schema: CsvSchema) -> TrialDataset:
    """
    Lädt einen Studiendatensatz aus einer CSV-Datei.

    Zeilenangaben in Fehlermeldungen zählen Datenzeilen ab 1 (ohne Header).
    Ist keine Kovariatenliste angegeben, werden alle übrigen Spalten außer
    schema.exclude in Dateireihenfolge verwendet.

    Args:
        path: Pfad zur CSV-Datei (UTF-8, Header-Zeile, '.' als Dezimaltrenner)
        schema: Spaltenzuordnung

    Returns:
        Validierter TrialDataset

    Raises:
        AppException: fehlende Spalte, nicht-numerische Zelle, ungültige Kodierung
    """
    path = Path(path)
    if not path.exists():
        raise AppException(
            ErrorCode.CONFIG_FILE_NOT_FOUND,
            f"Datendatei nicht gefunden: {path}",
            context={'file': str(path)}
        )
    frame = pd.read_csv(path, encoding='utf-8', dtype=str, keep_default_na=False)
    logger.info(f"CSV geladen: {path} ({len(frame)} Zeilen, {len(frame.columns)} Spalten)")

    reserved = [schema.outcome, schema.treatment] + ([schema.weight] if schema.weight else [])
    skipped = set(reserved) | set(schema.exclude or [])
    covariates = list(schema.covariates) if schema.covariates else [
        c for c in frame.columns if c not in skipped
    ]
    for column in reserved + covariates:
        if column not in frame.columns:
            raise AppException(
                ErrorCode.DATA_MISSING_COLUMN,
                f"Spalte '{column}' fehlt in {path.name}",
                context={'file': str(path), 'column': column, 'available': list(frame.columns)}
            )
    if not covariates:
        raise AppException(ErrorCode.DATA_MISSING_COLUMN, "Keine Kovariatenspalten gefunden",
                           context={'file': str(path)})

    y = _numeric_column(frame, schema.outcome, path)
    t = _numeric_column(frame, schema.treatment, path)
    if schema.remap_treatment:
        bad = np.flatnonzero(~np.isin(t, (0.0, 1.0)))
        if bad.size:
            row = int(bad[0])
            raise AppException(
                ErrorCode.DATA_INVALID_TREATMENT,
                f"Behandlungswert {t[row]:g} in Zeile {row + 1} ist nicht 0/1 (Remap aktiv)",
                context={'file': str(path), 'row': row + 1, 'column': schema.treatment}
            )
        t = 2.0 * t - 1.0
    bad = np.flatnonzero(~np.isin(t, (-1.0, 1.0)))
    if bad.size:
        row = int(bad[0])
        raise AppException(
            ErrorCode.DATA_INVALID_TREATMENT,
            f"Behandlungswert {t[row]:g} in Zeile {row + 1} außerhalb von {{-1, +1}}",
            context={'file': str(path), 'row': row + 1, 'column': schema.treatment}
        )
    if schema.outcome_kind == "binary":
        bad = np.flatnonzero(~np.isin(y, (0.0, 1.0)))
        if bad.size:
            row = int(bad[0])
            raise AppException(
                ErrorCode.DATA_INVALID_OUTCOME,
                f"Binärer Outcome {y[row]:g} in Zeile {row + 1} außerhalb von {{0, 1}}",
                context={'file': str(path), 'row': row + 1, 'column': schema.outcome}
            )

    x = np.column_stack([_numeric_column(frame, c, path) for c in covariates])

    w = None
    if schema.weight:
        w = _numeric_column(frame, schema.weight, path)
        bad = np.flatnonzero(~(w > 0))
        if bad.size:
            row = int(bad[0])
            raise AppException(
                ErrorCode.DATA_INVALID_WEIGHT,
                f"Gewicht {w[row]:g} in Zeile {row + 1} ist nicht positiv",
                context={'file': str(path), 'row': row + 1, 'column': schema.weight}
            )
    elif schema.case_control_population_controls is not None:
        w = case_control_weights(y, schema.case_control_population_controls)

    return TrialDataset(
        y=y, t=t, x=x, p_treat=schema.p_treat, w_sample=w,
        outcome_kind=schema.outcome_kind, feature_names=covariates
    )


def load_covariates(path: Union[str, Path], names: Sequence[str]) -> np.ndarray:
    """Liest nur die benannten Kovariatenspalten (z.B. zum Scoren mit einem gespeicherten Modell)"""
    path = Path(path)
    if not path.exists():
        raise AppException(ErrorCode.CONFIG_FILE_NOT_FOUND, f"Datendatei nicht gefunden: {path}",
                           context={'file': str(path)})
    frame = pd.read_csv(path, encoding='utf-8', dtype=str, keep_default_na=False)
    missing = [c for c in names if c not in frame.columns]
    if missing:
        raise AppException(
            ErrorCode.DATA_MISSING_COLUMN,
            f"Spalte '{missing[0]}' fehlt in {path.name}",
            context={'file': str(path), 'column': missing[0], 'missing': missing}
        )
    if len(frame) == 0:
        raise AppException(ErrorCode.DATA_EMPTY, f"{path.name} enthält keine Zeilen")
    return np.column_stack([_numeric_column(frame, c, path) for c in names])


def case_control_weights(
    y: np.ndarray,
    controls_in_population: float,
    cases_weight: float = 1.0
) -> np.ndarray:
    """
    Inverse Stichprobenwahrscheinlichkeiten für eine Fall-Kontroll-Stichprobe.

    Kontrollen (y=0) erhalten W = Kontrollen in der Population / gezogene Kontrollen,
    Fälle erhalten cases_weight.
    """
    y = np.asarray(y, dtype=float)
    n_controls = int(np.sum(y == 0))
    if n_controls == 0:
        raise AppException(ErrorCode.DATA_DEGENERATE, "Keine Kontrollen in der Stichprobe")
    if controls_in_population < n_controls:
        raise AppException(
            ErrorCode.VAL_OUT_OF_RANGE,
            "Populationsgröße der Kontrollen kleiner als die gezogenen Kontrollen",
            context={'population': controls_in_population, 'sampled': n_controls}
        )
    control_weight = float(controls_in_population) / n_controls
    logger.info(f"Fall-Kontroll-Gewichte: Kontrollen {control_weight:.4f}, Fälle {cases_weight}")
    return np.where(y == 0, control_weight, float(cases_weight))


def dataset_summary(data: TrialDataset) -> Dict[str, float]:
    """Kurze Kennzahlen für Logs und Zusammenfassungen"""
    treated = data.t > 0
    return {
        "n": data.n,
        "p": data.p,
        "n_treated": int(np.sum(treated)),
        "n_control": int(np.sum(~treated)),
        "p_treat": data.p_treat,
        "outcome_mean": float(np.mean(data.y)),
    }
