"""
Metrics Service für TSGBT
Spearman-Korrelation, MSE auf der Schätzskala und gain-basierte Variablenwichtigkeit
"""

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd
from scipy import stats

from app.core.error_handler import AppException, ErrorCode
from app.core.logging_config import get_logger
from app.services.loss_service import check_estimand
from app.services.tree_service import Ensemble

logger = get_logger(__name__)


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """
    Rangkorrelation nach Spearman (Bindungen erhalten mittlere Ränge).

    Raises:
        AppException: ungleiche Längen, n < 2 oder konstanter Vektor (NUM001)
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise AppException(ErrorCode.VAL_MISALIGNED, "spearman: Vektoren unterschiedlich lang")
    if a.size < 2:
        raise AppException(ErrorCode.VAL_INVALID_INPUT, "spearman: mindestens zwei Werte erforderlich")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise AppException(ErrorCode.NUM_UNDEFINED, "spearman: Korrelation für konstanten Vektor undefiniert")
    rho = stats.spearmanr(a, b).correlation
    return float(np.clip(rho, -1.0, 1.0))


def mse_scale(est: Sequence[float], truth: Sequence[float], estimand: str) -> float:
    """Mittlerer quadratischer Fehler; für riskratio auf der Log-Skala"""
    check_estimand(estimand)
    est = np.asarray(est, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if est.shape != truth.shape:
        raise AppException(ErrorCode.VAL_MISALIGNED, "mse_scale: Vektoren unterschiedlich lang")
    if estimand == "riskratio":
        if np.any(est <= 0) or np.any(truth <= 0):
            raise AppException(
                ErrorCode.VAL_OUT_OF_RANGE,
                "mse_scale: Risikoverhältnisse müssen positiv sein"
            )
        est, truth = np.log(est), np.log(truth)
    return float(np.mean((est - truth) ** 2))


@dataclass
class ImportanceReport:
    """Gain-Summen je Merkmal, absteigend sortiert; relative Werte max-normiert auf 100"""
    feature_names: List[str] = field(default_factory=list)
    raw_gain: List[float] = field(default_factory=list)
    relative: List[float] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.feature_names

    def top(self, k: int = 20) -> List[str]:
        return self.feature_names[:k]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'feature': self.feature_names,
            'raw_gain': self.raw_gain,
            'relative': self.relative,
        })

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.feature_names, self.relative))


def feature_gains(ensemble: Ensemble) -> np.ndarray:
    """Summe der Split-Gewinne je Merkmalsindex"""
    totals = np.zeros(ensemble.n_features)
    for tree in ensemble.trees:
        np.add.at(totals, tree.split_features(), tree.split_gains())
    return totals


def variable_importance(model: Union[Ensemble, "object"]) -> ImportanceReport:
    """
    Variablenwichtigkeit aus den Split-Gewinnen.
    Akzeptiert ein Ensemble oder ein Objekt mit Attribut stage2 (TwoStageModel).
    Ein Ensemble ohne Splits liefert einen leeren Report.
    """
    ensemble = getattr(model, 'stage2', model)
    if not isinstance(ensemble, Ensemble):
        raise AppException(ErrorCode.MODEL_NOT_FITTED, "variable_importance: kein angepasstes Ensemble")
    totals = feature_gains(ensemble)
    top = totals.max() if totals.size else 0.0
    if top <= 0.0:
        return ImportanceReport()
    relative = 100.0 * totals / top
    # absteigend nach Gewinn, bei Gleichstand Spaltenreihenfolge
    order = np.lexsort((np.arange(totals.size), -totals))
    return ImportanceReport(
        feature_names=[ensemble.feature_names[i] for i in order],
        raw_gain=[float(totals[i]) for i in order],
        relative=[float(relative[i]) for i in order],
    )


def tau_summary(tau: np.ndarray, threshold: float) -> Dict[str, float]:
    """Quantile von τ̂ und Anteil unterhalb der Schwelle"""
    tau = np.asarray(tau, dtype=float)
    quantiles = np.quantile(tau, [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0])
    labels = ['min', 'q10', 'q25', 'median', 'q75', 'q90', 'max']
    summary = {label: float(v) for label, v in zip(labels, quantiles)}
    summary['mean'] = float(np.mean(tau))
    summary['threshold'] = float(threshold)
    summary['proportion_below_threshold'] = float(np.mean(tau < threshold))
    return summary
