"""
Two-Stage Manager für TSGBT
Orchestriert die zweistufige Anpassung: Stufe 1 (Augmentation), Transformation,
Stufe 2 (HTE), sowie die Vergleichsverfahren WGBT und SGBT
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import expit
from sklearn.model_selection import StratifiedShuffleSplit

from app.core.error_handler import AppException, ErrorCode
from app.core.logging_config import get_logger
from app.managers.cv_manager import CVSettings, DiagnosticCurve, fit_boosted, strata_for
from app.services.data_service import TrialDataset
from app.services.loss_service import (
    check_estimand,
    estimand_for,
    stage1_loss,
    stage2_loss,
    transform_hte,
    transform_stage1,
)
from app.services.tree_service import BoostParams, Ensemble, predict_ensemble
from app.utils.io_utils import read_json, write_json

logger = get_logger(__name__)

MODES = ("tsgbt", "wgbt", "sgbt")

# Schlüssel der Zufallsströme je Anpassungsschritt
STAGE1_KEY = (1,)
STAGE2_KEY = (2,)
SGBT_TREATED_KEY = (3,)
SGBT_CONTROL_KEY = (4,)


def _resolve_estimand(data: TrialDataset, estimand: Optional[str]) -> str:
    estimand = check_estimand(estimand or estimand_for(data.outcome_kind))
    if estimand == "riskratio" and data.outcome_kind != "binary":
        raise AppException(ErrorCode.VAL_INVALID_INPUT, "riskratio erfordert einen binären Outcome")
    return estimand


def _check_dim(n_features: int, x: np.ndarray):
    if x.shape[1] != n_features:
        raise AppException(
            ErrorCode.MODEL_DIMENSION_MISMATCH,
            f"Kovariatenzahl {x.shape[1]} passt nicht zum Modell ({n_features})",
            context={'expected': n_features, 'got': int(x.shape[1])}
        )


@dataclass
class TwoStageModel:
    """
    Angepasstes Zwei-Stufen-Modell.

    stage1 fehlt bei mode='wgbt' und bei extern vorgegebenem â₀ (a0_source != 'stage1').
    """
    stage2: Ensemble
    estimand: str
    outcome_kind: str
    params2: BoostParams
    feature_names: List[str]
    stage1: Optional[Ensemble] = None
    params1: Optional[BoostParams] = None
    mode: str = "tsgbt"
    a0_source: str = "stage1"
    curve1: Optional[DiagnosticCurve] = field(default=None, compare=False)
    curve2: Optional[DiagnosticCurve] = field(default=None, compare=False)

    model_type = "two_stage"

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def predict_f(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        _check_dim(self.n_features, x)
        return self.stage2.predict(x)

    def predict_tau(self, x: np.ndarray) -> np.ndarray:
        """τ̂(x) für alle Zeilen"""
        return np.atleast_1d(transform_hte(self.predict_f(x), self.estimand))

    def predict_a0(self, x: np.ndarray) -> np.ndarray:
        """â₀(x) aus Stufe 1"""
        if self.stage1 is None:
            raise AppException(ErrorCode.MODEL_NOT_FITTED, f"Modell ohne Stufe 1 (a0_source={self.a0_source})")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        _check_dim(self.n_features, x)
        return np.atleast_1d(transform_stage1(self.stage1.predict(x), self.outcome_kind, self.estimand))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'model_type': self.model_type,
            'mode': self.mode,
            'estimand': self.estimand,
            'outcome_kind': self.outcome_kind,
            'a0_source': self.a0_source,
            'transform_stage1': f"{self.outcome_kind}_{self.estimand}",
            'transform_hte': self.estimand,
            'feature_names': list(self.feature_names),
            'params1': self.params1.to_dict() if self.params1 else None,
            'params2': self.params2.to_dict(),
            'stage1': self.stage1.to_dict() if self.stage1 else None,
            'stage2': self.stage2.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TwoStageModel":
        try:
            stage1 = Ensemble.from_dict(data['stage1']) if data.get('stage1') else None
            params1 = BoostParams(**data['params1']) if data.get('params1') else None
            model = cls(
                stage2=Ensemble.from_dict(data['stage2']),
                estimand=check_estimand(data['estimand']),
                outcome_kind=data['outcome_kind'],
                params2=BoostParams(**data['params2']),
                feature_names=[str(n) for n in data['feature_names']],
                stage1=stage1,
                params1=params1,
                mode=data.get('mode', 'tsgbt'),
                a0_source=data.get('a0_source', 'stage1'),
            )
        except (KeyError, TypeError) as e:
            raise AppException(ErrorCode.MODEL_INVALID_FORMAT, f"Modelldatei unvollständig: {e}")
        if model.stage2.n_features != model.n_features or (stage1 and stage1.n_features != model.n_features):
            raise AppException(ErrorCode.MODEL_INVALID_FORMAT, "Stufen haben unterschiedliche Kovariatenzahl")
        return model


@dataclass
class SGBTModel:
    """Getrennte Ensembles je Behandlungsarm"""
    treated: Ensemble
    control: Ensemble
    estimand: str
    outcome_kind: str
    params: BoostParams
    feature_names: List[str]
    curve_treated: Optional[DiagnosticCurve] = field(default=None, compare=False)
    curve_control: Optional[DiagnosticCurve] = field(default=None, compare=False)

    model_type = "sgbt"
    mode = "sgbt"

    def arm_means(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(μ̂₁(x), μ̂₋₁(x)) auf der Outcome-Skala"""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        _check_dim(len(self.feature_names), x)
        a1, a0 = self.treated.predict(x), self.control.predict(x)
        if self.outcome_kind == "binary":
            return expit(a1), expit(a0)
        return a1, a0

    def predict_tau(self, x: np.ndarray) -> np.ndarray:
        mu1, mu0 = self.arm_means(x)
        if self.estimand == "riskratio":
            return mu1 / mu0
        return mu1 - mu0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'model_type': self.model_type,
            'mode': self.mode,
            'estimand': self.estimand,
            'outcome_kind': self.outcome_kind,
            'feature_names': list(self.feature_names),
            'params': self.params.to_dict(),
            'treated': self.treated.to_dict(),
            'control': self.control.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SGBTModel":
        try:
            return cls(
                treated=Ensemble.from_dict(data['treated']),
                control=Ensemble.from_dict(data['control']),
                estimand=check_estimand(data['estimand']),
                outcome_kind=data['outcome_kind'],
                params=BoostParams(**data['params']),
                feature_names=[str(n) for n in data['feature_names']],
            )
        except (KeyError, TypeError) as e:
            raise AppException(ErrorCode.MODEL_INVALID_FORMAT, f"Modelldatei unvollständig: {e}")


def fit_stage1(
    data: TrialDataset,
    params: BoostParams,
    cv: CVSettings = CVSettings()
) -> Tuple[Ensemble, DiagnosticCurve]:
    """
    Erste Stufe: Haupteffekt-Ensemble mit randomisierungsgewichtetem MSE
    (stetig) bzw. logistischem Verlust (binär).

    Raises:
        AppException: binärer Outcome nur 0 oder nur 1 (DAT007)
    """
    loss = stage1_loss(data.outcome_kind)
    ensemble, curve = fit_boosted(data, loss, params, cv, rng_key=STAGE1_KEY)
    logger.info(f"Stufe 1 angepasst: {loss.kind}, M_a={ensemble.n_rounds}")
    return ensemble, curve


def fit_stage2(
    data: TrialDataset,
    a0: Optional[np.ndarray],
    params: BoostParams,
    estimand: Optional[str] = None,
    cv: CVSettings = CVSettings()
) -> Tuple[Ensemble, DiagnosticCurve]:
    """
    Zweite Stufe: HTE-Ensemble mit augmentiertem Verlust.
    a0=None verwendet die Variante ohne Augmentation (WGBT).
    """
    estimand = _resolve_estimand(data, estimand)
    if a0 is not None:
        a0 = np.asarray(a0, dtype=float).ravel()
        if a0.shape[0] != data.n:
            raise AppException(
                ErrorCode.VAL_MISALIGNED,
                "a0 passt nicht zur Zeilenzahl des Datensatzes",
                context={'n_a0': int(a0.shape[0]), 'n': data.n}
            )
    loss = stage2_loss(estimand, a0)
    ensemble, curve = fit_boosted(data, loss, params, cv, rng_key=STAGE2_KEY)
    logger.info(f"Stufe 2 angepasst: {loss.kind}, M={ensemble.n_rounds}")
    return ensemble, curve


def fit_tsgbt(
    data: TrialDataset,
    params1: Optional[BoostParams],
    params2: BoostParams,
    estimand: Optional[str] = None,
    mode: str = "tsgbt",
    a0: Optional[np.ndarray] = None,
    a0_source: str = "external",
    cv1: CVSettings = CVSettings(),
    cv2: CVSettings = CVSettings(),
    stage1_fit: Optional[Tuple[Ensemble, DiagnosticCurve]] = None
) -> TwoStageModel:
    """
    Zwei-Stufen-Anpassung: fit_stage1 → transform_stage1 → fit_stage2.

    mode='wgbt' überspringt Stufe 1 und setzt â₀ ≡ 0. Ein vorgegebenes a0 ersetzt
    Stufe 1 (a0_source wird im Modell vermerkt, z.B. 'external' oder 'oracle').
    stage1_fit übernimmt ein bereits angepasstes (Ensemble, Kurve) aus fit_stage1.
    """
    if mode not in ("tsgbt", "wgbt"):
        raise AppException(ErrorCode.VAL_UNKNOWN_IDENTIFIER, f"fit_tsgbt: ungültiger Modus '{mode}'")
    estimand = _resolve_estimand(data, estimand)

    stage1, curve1, a0_hat = None, None, None
    if mode == "wgbt":
        a0_source = "none"
    elif a0 is not None:
        a0_hat = np.asarray(a0, dtype=float)
        logger.info(f"Stufe 1 übersprungen, â₀ aus Quelle '{a0_source}'")
    else:
        if params1 is None:
            raise AppException(ErrorCode.CONFIG_MISSING_KEY, "params1 fehlt für die erste Stufe")
        if stage1_fit is not None:
            stage1, curve1 = stage1_fit
            _check_dim(stage1.n_features, data.x)
        else:
            stage1, curve1 = fit_stage1(data, params1, cv1)
        a0_hat = np.atleast_1d(transform_stage1(stage1.predict(data.x), data.outcome_kind, estimand))
        a0_source = "stage1"

    stage2, curve2 = fit_stage2(data, a0_hat, params2, estimand, cv2)
    return TwoStageModel(
        stage2=stage2, estimand=estimand, outcome_kind=data.outcome_kind,
        params2=params2, feature_names=list(data.feature_names),
        stage1=stage1, params1=params1 if stage1 is not None else None,
        mode=mode, a0_source=a0_source, curve1=curve1, curve2=curve2
    )


def fit_sgbt(
    data: TrialDataset,
    params: BoostParams,
    estimand: Optional[str] = None,
    cv: CVSettings = CVSettings()
) -> SGBTModel:
    """
    Getrennte Standard-Ensembles je Arm (MSE bzw. logistisch) mit Stichprobengewichten.

    Raises:
        AppException: leerer Arm (DAT007)
    """
    estimand = _resolve_estimand(data, estimand)
    arms = {}
    for label, sign, key in (("treated", 1.0, SGBT_TREATED_KEY), ("control", -1.0, SGBT_CONTROL_KEY)):
        rows = np.flatnonzero(data.t == sign)
        if rows.size == 0:
            raise AppException(ErrorCode.DATA_DEGENERATE, f"Arm '{label}' ist leer")
        arm = data.subset(rows)
        arms[label] = fit_boosted(arm, stage1_loss(data.outcome_kind), params, cv,
                                  weights=arm.w_sample, rng_key=key)
    logger.info(
        f"SGBT angepasst: M_treated={arms['treated'][0].n_rounds}, M_control={arms['control'][0].n_rounds}"
    )
    return SGBTModel(
        treated=arms['treated'][0], control=arms['control'][0], estimand=estimand,
        outcome_kind=data.outcome_kind, params=params, feature_names=list(data.feature_names),
        curve_treated=arms['treated'][1], curve_control=arms['control'][1]
    )


def predict_hte(model: TwoStageModel, x_row: Sequence[float]) -> float:
    """τ̂ für eine einzelne Kovariatenzeile"""
    row = np.asarray(x_row, dtype=float).ravel()
    _check_dim(model.n_features, row.reshape(1, -1))
    f = predict_ensemble(model.stage2.trees, model.stage2.learning_rate, model.stage2.base, row)
    return transform_hte(f, model.estimand)


AnyModel = Union[TwoStageModel, SGBTModel]


def save_model(model: AnyModel, path: Union[str, Path]) -> Path:
    return write_json(path, model.to_dict())


def load_model(path: Union[str, Path]) -> AnyModel:
    """Lädt ein gespeichertes Zwei-Stufen- oder SGBT-Modell"""
    data = read_json(path)
    if not isinstance(data, dict):
        raise AppException(ErrorCode.MODEL_INVALID_FORMAT, f"Modelldatei {path} ist kein JSON-Objekt")
    model_type = data.get('model_type')
    if model_type == TwoStageModel.model_type:
        return TwoStageModel.from_dict(data)
    if model_type == SGBTModel.model_type:
        return SGBTModel.from_dict(data)
    raise AppException(ErrorCode.MODEL_INVALID_FORMAT, f"Unbekannter Modelltyp '{model_type}'")


def holdout_proportions(
    data: TrialDataset,
    params1: BoostParams,
    params2: BoostParams,
    estimand: Optional[str] = None,
    threshold: Optional[float] = None,
    n_splits: int = 10,
    test_fraction: float = 0.1,
    seed: int = 0,
    cv: CVSettings = CVSettings()
) -> pd.DataFrame:
    """
    Wiederholte Holdout-Validierung: Anpassung auf (1 − test_fraction) der Daten,
    Anteil der Holdout-Teilnehmer mit τ̂ unter der Schwelle.
    """
    estimand = _resolve_estimand(data, estimand)
    if threshold is None:
        threshold = default_threshold(estimand)
    if not (0.0 < test_fraction < 1.0):
        raise AppException(ErrorCode.VAL_OUT_OF_RANGE, f"test_fraction muss in (0,1) liegen: {test_fraction}")
    splitter = StratifiedShuffleSplit(n_splits=n_splits, test_size=test_fraction,
                                      random_state=int(seed) % (2 ** 32))
    rows = []
    for split, (train, test) in enumerate(splitter.split(np.zeros(data.n), strata_for(data))):
        model = fit_tsgbt(data.subset(train), params1, params2, estimand, cv1=cv, cv2=cv)
        tau = model.predict_tau(data.x[test])
        rows.append({
            'split': split,
            'n_test': int(test.size),
            'proportion_below_threshold': float(np.mean(tau < threshold)),
        })
        logger.debug(f"Holdout {split}: Anteil {rows[-1]['proportion_below_threshold']:.3f}")
    return pd.DataFrame(rows, columns=['split', 'n_test', 'proportion_below_threshold'])


def default_threshold(estimand: str) -> float:
    """Schwelle für 'reduziertes Risiko': τ̂ < 1 (riskratio) bzw. τ̂ < 0 (meandiff)"""
    return 1.0 if check_estimand(estimand) == "riskratio" else 0.0
