"""
CV Manager für TSGBT
k-fache Kreuzvalidierung mit Early Stopping, Diagnosekurven und
sequentielle Gitter-Abstimmung einzelner Hyperparameter
"""

from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.model_selection import StratifiedKFold

from app.config import DEFAULT_CONFIG
from app.core.error_handler import AppException, ErrorCode
from app.core.logging_config import get_logger
from app.services.data_service import TrialDataset
from app.services.loss_service import LossSpec
from app.services.tree_service import BoostingState, BoostParams, Ensemble, boost
from app.workers.parallel_worker import run_parallel

logger = get_logger(__name__)


@dataclass(frozen=True)
class CVSettings:
    """Einstellungen für die Rundenwahl per Kreuzvalidierung"""
    enabled: bool = True
    n_folds: int = DEFAULT_CONFIG["cv"]["n_folds"]
    patience: int = DEFAULT_CONFIG["cv"]["patience"]
    n_jobs: Optional[int] = None

    def __post_init__(self):
        if self.n_folds < 2:
            raise AppException(ErrorCode.VAL_OUT_OF_RANGE, f"n_folds muss ≥ 2 sein: {self.n_folds}")
        if self.patience < 1:
            raise AppException(ErrorCode.VAL_OUT_OF_RANGE, f"patience muss ≥ 1 sein: {self.patience}")


NO_CV = CVSettings(enabled=False)


@dataclass
class DiagnosticCurve:
    """
    Mittlerer Verlust je Boosting-Runde (Index = Runde, Runde 0 = Startwert).
    source ist 'cv' für Fold-Validierungsverluste oder 'train' ohne Kreuzvalidierung.
    """
    losses: List[float] = field(default_factory=list)
    chosen_round: int = 0
    source: str = "cv"
    stopped_early: bool = False

    @property
    def n_evaluated(self) -> int:
        return len(self.losses) - 1

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'round': np.arange(len(self.losses)),
            'mean_heldout_loss': self.losses,
        })


def strata_for(data: TrialDataset) -> np.ndarray:
    """Schichtungslabel: Behandlungsarm, bei binärem Outcome zusätzlich das Outcome"""
    labels = (data.t > 0).astype(int) * 2
    if data.outcome_kind == "binary":
        labels = labels + data.y.astype(int)
    return labels


def make_folds(strata: np.ndarray, n_folds: int, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Geschichtete, geseedete Fold-Zuordnung; Reihenfolge der Folds ist fest"""
    skf = StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=int(seed) % (2 ** 32))
    try:
        return [(train, test) for train, test in skf.split(np.zeros(len(strata)), strata)]
    except ValueError as e:
        raise AppException(
            ErrorCode.VAL_OUT_OF_RANGE,
            f"Zu wenige Beobachtungen je Schicht für {n_folds} Folds",
            context={'n_folds': n_folds, 'counts': np.bincount(strata).tolist()},
            details=str(e)
        )


def _advance(state: BoostingState, k: int) -> BoostingState:
    return state.advance(k)


def cross_validate_rounds(
    data: TrialDataset,
    loss: LossSpec,
    params: BoostParams,
    cv: CVSettings = CVSettings(),
    weights: Optional[np.ndarray] = None,
    rng_key: Tuple[int, ...] = ()
) -> DiagnosticCurve:
    """
    Wählt die Rundenzahl M per k-facher Kreuzvalidierung.

    Alle Folds laufen blockweise (je patience Runden) im Gleichschritt. Abbruch,
    sobald sich der mittlere Validierungsverlust patience Runden lang nicht
    verbessert hat oder params.n_rounds erreicht ist. M ist das (erste) Minimum
    der Kurve; Runde 0 ist zulässig.
    """
    w = data.combined_weights if weights is None else np.asarray(weights, dtype=float)
    folds = make_folds(strata_for(data), cv.n_folds, params.seed)
    states = []
    for f, (train, test) in enumerate(folds):
        eval_set = (data.x[test], data.y[test], data.t[test], w[test], loss.restrict(test))
        states.append(BoostingState(
            data.x[train], data.y[train], data.t[train], w[train], loss.restrict(train),
            params, rng_key=tuple(rng_key) + (f + 1,), eval_set=eval_set
        ))

    max_rounds = params.n_rounds
    rounds = 0
    stopped_early = False
    mean_curve = np.mean([s.eval_curve for s in states], axis=0)
    while rounds < max_rounds:
        block = min(cv.patience, max_rounds - rounds)
        states = run_parallel(_advance, [(s, block) for s in states], n_jobs=cv.n_jobs, backend="threading")
        rounds += block
        mean_curve = np.mean([s.eval_curve for s in states], axis=0)
        best = int(np.argmin(mean_curve))
        if rounds - best >= cv.patience:
            stopped_early = rounds < max_rounds
            break

    chosen = int(np.argmin(mean_curve))
    logger.info(
        f"CV {loss.kind}: {cv.n_folds} Folds, {rounds} Runden ausgewertet, gewählt M={chosen}"
    )
    return DiagnosticCurve(
        losses=[float(v) for v in mean_curve], chosen_round=chosen,
        source="cv", stopped_early=stopped_early
    )


def fit_boosted(
    data: TrialDataset,
    loss: LossSpec,
    params: BoostParams,
    cv: CVSettings = CVSettings(),
    weights: Optional[np.ndarray] = None,
    rng_key: Tuple[int, ...] = ()
) -> Tuple[Ensemble, DiagnosticCurve]:
    """
    Passt ein Ensemble an; mit aktivierter CV wird M gewählt und anschließend
    auf allen Daten mit M Runden neu angepasst.
    """
    w = data.combined_weights if weights is None else np.asarray(weights, dtype=float)
    if cv.enabled:
        curve = cross_validate_rounds(data, loss, params, cv, w, rng_key)
        ensemble = boost(data.x, data.y, data.t, w, loss, params, curve.chosen_round,
                         data.feature_names, rng_key=tuple(rng_key) + (0,))
        return ensemble, curve

    state = BoostingState(data.x, data.y, data.t, w, loss, params,
                          rng_key=tuple(rng_key) + (0,)).advance(params.n_rounds)
    curve = DiagnosticCurve(losses=[float(v) for v in state.train_curve],
                            chosen_round=params.n_rounds, source="train")
    return state.to_ensemble(data.feature_names), curve


TUNABLE = tuple(f.name for f in fields(BoostParams) if f.name not in ("seed", "n_rounds"))


def sequential_tune(
    data: TrialDataset,
    loss: LossSpec,
    params: BoostParams,
    grid: Dict[str, Sequence],
    order: Optional[Sequence[str]] = None,
    cv: CVSettings = CVSettings(),
    weights: Optional[np.ndarray] = None,
    rng_key: Tuple[int, ...] = ()
) -> Tuple[BoostParams, pd.DataFrame]:
    """
    Stimmt Hyperparameter nacheinander ab: für jeden Parameter in order wird jeder
    Gitterwert per CV bewertet (minimaler mittlerer Validierungsverlust), der beste
    Wert übernommen und mit dem nächsten Parameter fortgefahren.

    Returns:
        (abgestimmte BoostParams, Tabelle parameter/value/score/chosen_round/selected)
    """
    order = list(order) if order is not None else list(grid)
    for name in order:
        if name not in TUNABLE:
            raise AppException(
                ErrorCode.VAL_UNKNOWN_IDENTIFIER,
                f"Parameter '{name}' ist nicht abstimmbar",
                context={'tunable': list(TUNABLE)}
            )
        if not grid.get(name):
            raise AppException(ErrorCode.VAL_INVALID_INPUT, f"Leeres Gitter für '{name}'")

    cv = cv if cv.enabled else CVSettings(n_jobs=cv.n_jobs)
    rows = []
    current = params
    for name in order:
        scores = []
        for value in grid[name]:
            candidate = current.with_updates(**{name: value})
            curve = cross_validate_rounds(data, loss, candidate, cv, weights, rng_key)
            score = min(curve.losses)
            scores.append(score)
            rows.append({
                'parameter': name, 'value': value, 'score': score,
                'chosen_round': curve.chosen_round, 'selected': False
            })
        best = int(np.argmin(scores))
        current = current.with_updates(**{name: grid[name][best]})
        rows[len(rows) - len(scores) + best]['selected'] = True
        logger.info(f"Abstimmung {name}: gewählt {grid[name][best]} (Score {scores[best]:.6g})")
    return current, pd.DataFrame(rows, columns=['parameter', 'value', 'score', 'chosen_round', 'selected'])
