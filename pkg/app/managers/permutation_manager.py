"""
Permutation Manager für TSGBT
Bedingter Permutationstest auf globale Heterogenität des Behandlungseffekts
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from app.config import DEFAULT_CONFIG
from app.core.error_handler import AppException, ErrorCode
from app.core.logging_config import get_logger
from app.managers.cv_manager import NO_CV, CVSettings
from app.managers.two_stage_manager import fit_stage2
from app.services.data_service import TrialDataset
from app.services.loss_service import transform_hte
from app.services.tree_service import BoostParams, Ensemble
from app.workers.parallel_worker import run_parallel, spawn_rng

logger = get_logger(__name__)

STAT_KINDS = ("variance", "mad")


def dispersion_stat(tau: np.ndarray, kind: str = "variance") -> float:
    """
    Streuung der geschätzten Effekte.
    variance: Stichprobenvarianz (n−1); mad: median(|τ − median(τ)|), unskaliert.
    """
    tau = np.asarray(tau, dtype=float).ravel()
    if kind not in STAT_KINDS:
        raise AppException(ErrorCode.VAL_UNKNOWN_IDENTIFIER, f"Unbekannte Statistik '{kind}'",
                           context={'allowed': list(STAT_KINDS)})
    if tau.size < 2:
        raise AppException(ErrorCode.VAL_INVALID_INPUT, "dispersion_stat: mindestens zwei Werte erforderlich")
    if kind == "variance":
        return float(np.var(tau, ddof=1))
    return float(np.median(np.abs(tau - np.median(tau))))


def permutation_p_value(observed: float, perm_stats: np.ndarray, plus_one: bool = False) -> float:
    """Anteil der Permutationsstatistiken ≥ beobachteter Statistik"""
    perm_stats = np.asarray(perm_stats, dtype=float)
    exceed = int(np.sum(perm_stats >= observed))
    if plus_one:
        return (1.0 + exceed) / (1.0 + perm_stats.size)
    return exceed / perm_stats.size


@dataclass
class PermutationResult:
    """Ergebnis des Permutationstests"""
    observed_stat: float
    perm_stats: np.ndarray
    p_value: float
    stat_kind: str
    B: int
    seed: int
    n_rounds: int
    retune: bool = False
    plus_one: bool = False
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_summary(self) -> Dict[str, Any]:
        summary = {
            'observed_stat': self.observed_stat,
            'B': self.B,
            'p_value': self.p_value,
            'stat_kind': self.stat_kind,
            'seed': self.seed,
            'n_rounds': self.n_rounds,
            'retune': self.retune,
            'plus_one': self.plus_one,
        }
        summary.update(self.extra)
        return summary

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'replicate': np.arange(self.B), 'stat': self.perm_stats})


def _tau_stat(ensemble: Ensemble, x: np.ndarray, estimand: str, stat_kind: str) -> float:
    tau = np.atleast_1d(transform_hte(ensemble.predict(x), estimand))
    return dispersion_stat(tau, stat_kind)


def _replicate(
    b: int,
    data: TrialDataset,
    a0: Optional[np.ndarray],
    params2: BoostParams,
    estimand: str,
    stat_kind: str,
    seed: int,
    retune: bool,
    cv: CVSettings
) -> float:
    """Ein Permutationsreplikat: Zeilen von x permutieren, Stufe 2 neu anpassen"""
    perm = spawn_rng(seed, b).permutation(data.n)
    permuted = data.with_x(data.x[perm])
    ensemble, _ = fit_stage2(permuted, a0, params2, estimand, cv if retune else NO_CV)
    return _tau_stat(ensemble, permuted.x, estimand, stat_kind)


def permutation_test(
    data: TrialDataset,
    fitted_stage1_a0: Optional[np.ndarray],
    params2: BoostParams,
    estimand: str,
    B: int = DEFAULT_CONFIG["permutation"]["n_permutations"],
    stat_kind: str = DEFAULT_CONFIG["permutation"]["stat_kind"],
    seed: int = 0,
    observed: Optional[Ensemble] = None,
    cv: CVSettings = CVSettings(),
    retune: bool = False,
    plus_one: bool = False,
    n_jobs: Optional[int] = None
) -> PermutationResult:
    """
    Bedingter Permutationstest mit fixiertem â₀.

    Ohne übergebenes observed-Ensemble wird Stufe 2 auf den unpermutierten Daten
    angepasst (Rundenwahl per cv). Jedes Replikat permutiert die Zeilen von x
    (y, t, Gewichte und â₀ bleiben in Originalreihenfolge) und passt Stufe 2 mit
    derselben Rundenzahl M neu an; retune=True wählt M je Replikat neu per CV.
    Replikat b nutzt den Zufallsstrom spawn_rng(seed, b).
    """
    if B < 1:
        raise AppException(ErrorCode.VAL_OUT_OF_RANGE, f"Anzahl Permutationen muss ≥ 1 sein: {B}")
    if stat_kind not in STAT_KINDS:
        raise AppException(ErrorCode.VAL_UNKNOWN_IDENTIFIER, f"Unbekannte Statistik '{stat_kind}'")
    a0 = None
    if fitted_stage1_a0 is not None:
        a0 = np.asarray(fitted_stage1_a0, dtype=float).ravel()
        if a0.shape[0] != data.n:
            raise AppException(
                ErrorCode.VAL_MISALIGNED,
                "fitted_stage1_a0 passt nicht zur Zeilenzahl",
                context={'n_a0': int(a0.shape[0]), 'n': data.n}
            )

    if observed is None:
        observed, _ = fit_stage2(data, a0, params2, estimand, cv)
    n_rounds = observed.n_rounds
    observed_stat = _tau_stat(observed, data.x, estimand, stat_kind)
    logger.info(f"Permutationstest: beobachtete {stat_kind}={observed_stat:.6g}, M={n_rounds}, B={B}")

    replicate_params = params2 if retune else params2.with_updates(n_rounds=n_rounds)
    tasks = [(b, data, a0, replicate_params, estimand, stat_kind, seed, retune, cv) for b in range(B)]
    perm_stats = np.asarray(run_parallel(_replicate, tasks, n_jobs=n_jobs), dtype=float)

    p_value = permutation_p_value(observed_stat, perm_stats, plus_one)
    logger.info(f"Permutationstest abgeschlossen: p={p_value:.4f}")
    return PermutationResult(
        observed_stat=observed_stat, perm_stats=perm_stats, p_value=p_value,
        stat_kind=stat_kind, B=int(B), seed=int(seed), n_rounds=n_rounds,
        retune=retune, plus_one=plus_one
    )
