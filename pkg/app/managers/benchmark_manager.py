"""
Benchmark Manager für TSGBT
Simulationsstudien: Methodenvergleich (sCORR/MSE) und Kalibrierung des
Permutationstests (empirische Ablehnungsraten)
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from app.core.error_handler import AppException, ErrorCode
from app.core.logging_config import get_logger
from app.managers.cv_manager import CVSettings
from app.managers.permutation_manager import STAT_KINDS, permutation_test
from app.managers.two_stage_manager import fit_sgbt, fit_tsgbt
from app.services.loss_service import estimand_for, inverse_transform_hte, optimal_aug_general
from app.services.metrics_service import mse_scale, spearman
from app.services.simulation_service import SCENARIOS, generate, sim_spec
from app.services.tree_service import BoostParams
from app.workers.parallel_worker import run_parallel, spawn_rng

logger = get_logger(__name__)

METHODS = ("tsgbt", "wgbt", "sgbt", "tsgbt_oracle")


@dataclass
class BenchmarkSettings:
    methods: List[str] = field(default_factory=lambda: ["tsgbt", "wgbt", "sgbt"])
    outcome_kind: str = "continuous"
    settings: List[str] = field(default_factory=lambda: ["2"])
    replicates: int = 20
    n_train: int = 300
    n_test: int = 1000
    p: int = 50
    seed: int = 0
    sim_overrides: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise AppException(
                ErrorCode.VAL_UNKNOWN_IDENTIFIER,
                f"Unbekannte Methoden: {unknown}" if unknown else "Keine Methode angegeben",
                context={'allowed': list(METHODS)}
            )
        if self.replicates < 1:
            raise AppException(ErrorCode.VAL_OUT_OF_RANGE, "replicates muss ≥ 1 sein")


@dataclass
class CalibrationSettings:
    scenarios: List[str] = field(default_factory=lambda: list(SCENARIOS))
    outcome_kinds: List[str] = field(default_factory=lambda: ["continuous", "binary"])
    n_datasets: int = 200
    B: int = 200
    alphas: List[float] = field(default_factory=lambda: [0.01, 0.05, 0.10])
    n_continuous: int = 300
    n_binary: int = 1500
    p: int = 50
    stat_kind: str = "variance"
    seed: int = 0

    def __post_init__(self):
        if self.stat_kind not in STAT_KINDS:
            raise AppException(ErrorCode.VAL_UNKNOWN_IDENTIFIER, f"Unbekannte Statistik '{self.stat_kind}'")
        if self.n_datasets < 1 or self.B < 1:
            raise AppException(ErrorCode.VAL_OUT_OF_RANGE, "n_datasets und B müssen ≥ 1 sein")


def _safe_spearman(est: np.ndarray, truth: np.ndarray) -> float:
    """sCORR, NaN wenn undefiniert (z.B. konstantes wahres τ)"""
    try:
        return spearman(est, truth)
    except AppException as e:
        if e.code == ErrorCode.NUM_UNDEFINED:
            return float('nan')
        raise


def _benchmark_replicate(
    setting_index: int,
    setting: str,
    replicate: int,
    bench: BenchmarkSettings,
    params1: BoostParams,
    params2: BoostParams,
    params_sgbt: BoostParams,
    cv: CVSettings
) -> List[Dict[str, Any]]:
    spec = sim_spec(bench.outcome_kind, setting, bench.n_train, bench.p, **bench.sim_overrides)
    train = generate(spec, spawn_rng(bench.seed, setting_index, replicate, 0))
    test = generate(spec.with_updates(n=bench.n_test), spawn_rng(bench.seed, setting_index, replicate, 1))
    estimand = estimand_for(bench.outcome_kind)

    rows = []
    for method in bench.methods:
        if method == "sgbt":
            model = fit_sgbt(train.data, params_sgbt, estimand, cv)
        elif method == "tsgbt_oracle":
            a0 = optimal_aug_general(train.mu1, train.mu0, inverse_transform_hte(train.true_tau, estimand),
                                     spec.p_treat, estimand)
            model = fit_tsgbt(train.data, None, params2, estimand, a0=a0, a0_source="oracle", cv2=cv)
        else:
            model = fit_tsgbt(train.data, params1, params2, estimand, mode=method, cv1=cv, cv2=cv)
        tau_hat = model.predict_tau(test.data.x)
        rows.append({
            'setting': setting,
            'replicate': replicate,
            'method': method,
            'scorr': _safe_spearman(tau_hat, test.true_tau),
            'mse': mse_scale(tau_hat, test.true_tau, estimand),
            'n_rounds': int(model.stage2.n_rounds) if hasattr(model, 'stage2') else None,
        })
    return rows


def run_benchmark(
    bench: BenchmarkSettings,
    params1: BoostParams,
    params2: BoostParams,
    params_sgbt: BoostParams,
    cv: CVSettings = CVSettings(),
    n_jobs: Optional[int] = None,
    progress: Optional[Callable[[str], None]] = None
) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    """
    Methodenvergleich auf simulierten Daten.

    Replikat r von Setting s zieht Trainings- und Testdaten aus den Strömen
    spawn_rng(seed, s, r, 0) bzw. spawn_rng(seed, s, r, 1).

    Returns:
        (Tabelle je Replikat und Methode, Zusammenfassung mit Medianen je Setting/Methode)
    """
    tasks = [
        (s_idx, str(setting), r, bench, params1, params2, params_sgbt, cv)
        for s_idx, setting in enumerate(bench.settings)
        for r in range(bench.replicates)
    ]
    if progress:
        progress(f"Benchmark: {len(tasks)} Replikate, Methoden {', '.join(bench.methods)}")
    results = run_parallel(_benchmark_replicate, tasks, n_jobs=n_jobs)
    frame = pd.DataFrame(
        [row for rows in results for row in rows],
        columns=['setting', 'replicate', 'method', 'scorr', 'mse', 'n_rounds']
    )

    medians: Dict[str, Dict[str, Any]] = {}
    for (setting, method), group in frame.groupby(['setting', 'method'], sort=True):
        scorr = group['scorr'].to_numpy(dtype=float)
        medians.setdefault(str(setting), {})[method] = {
            'median_scorr': float(np.nanmedian(scorr)) if np.any(np.isfinite(scorr)) else None,
            'median_mse': float(np.median(group['mse'])),
            'replicates': int(len(group)),
        }
    summary = {
        'outcome_kind': bench.outcome_kind,
        'methods': list(bench.methods),
        'settings': [str(s) for s in bench.settings],
        'replicates': bench.replicates,
        'n_train': bench.n_train,
        'n_test': bench.n_test,
        'p': bench.p,
        'seed': bench.seed,
        'medians': medians,
    }
    logger.info(f"Benchmark abgeschlossen: {len(frame)} Zeilen")
    if progress:
        progress("Benchmark abgeschlossen")
    return frame, summary


def _calibration_dataset(
    kind_index: int,
    outcome_kind: str,
    scenario_index: int,
    scenario: str,
    dataset: int,
    cal: CalibrationSettings,
    params1: BoostParams,
    params2: BoostParams,
    cv: CVSettings
) -> Dict[str, Any]:
    n = cal.n_binary if outcome_kind == "binary" else cal.n_continuous
    spec = sim_spec(outcome_kind, scenario, n, cal.p)
    truthed = generate(spec, spawn_rng(cal.seed, kind_index, scenario_index, dataset, 0))
    estimand = estimand_for(outcome_kind)
    model = fit_tsgbt(truthed.data, params1, params2, estimand, cv1=cv, cv2=cv)
    a0 = model.predict_a0(truthed.data.x)
    perm_seed = int(np.random.SeedSequence(cal.seed, spawn_key=(kind_index, scenario_index, dataset, 1))
                    .generate_state(1)[0])
    result = permutation_test(
        truthed.data, a0, params2, estimand, B=cal.B, stat_kind=cal.stat_kind,
        seed=perm_seed, observed=model.stage2, cv=cv, n_jobs=1
    )
    return {
        'outcome_kind': outcome_kind,
        'scenario': scenario,
        'dataset': dataset,
        'n_rounds': result.n_rounds,
        'observed_stat': result.observed_stat,
        'p_value': result.p_value,
    }


def run_calibration(
    cal: CalibrationSettings,
    params1: BoostParams,
    params2: BoostParams,
    cv: CVSettings = CVSettings(),
    n_jobs: Optional[int] = None,
    progress: Optional[Callable[[str], None]] = None
) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    """
    Fehler-1.-Art-Studie: je Szenario und Outcome-Typ n_datasets Null-Datensätze,
    je Datensatz ein Permutationstest mit B Permutationen. Ablehnung bei p < α.
    """
    tasks = []
    for k_idx, kind in enumerate(cal.outcome_kinds):
        for s_idx, scenario in enumerate(cal.scenarios):
            for d in range(cal.n_datasets):
                tasks.append((k_idx, kind, s_idx, str(scenario).upper(), d, cal, params1, params2, cv))
    if progress:
        progress(f"Kalibrierung: {len(tasks)} Datensätze × {cal.B} Permutationen")
    rows = run_parallel(_calibration_dataset, tasks, n_jobs=n_jobs)
    frame = pd.DataFrame(rows, columns=['outcome_kind', 'scenario', 'dataset', 'n_rounds',
                                        'observed_stat', 'p_value'])

    rates: Dict[str, Dict[str, Dict[str, float]]] = {}
    for (kind, scenario), group in frame.groupby(['outcome_kind', 'scenario'], sort=True):
        p_values = group['p_value'].to_numpy(dtype=float)
        rates.setdefault(kind, {})[scenario] = {
            f"{alpha:g}": float(np.mean(p_values < alpha)) for alpha in cal.alphas
        }
    summary = {
        'scenarios': [str(s).upper() for s in cal.scenarios],
        'outcome_kinds': list(cal.outcome_kinds),
        'n_datasets': cal.n_datasets,
        'B': cal.B,
        'p': cal.p,
        'alphas': list(cal.alphas),
        'stat_kind': cal.stat_kind,
        'seed': cal.seed,
        'rejection_rates': rates,
    }
    logger.info(f"Kalibrierung abgeschlossen: {len(frame)} Datensätze")
    if progress:
        progress("Kalibrierung abgeschlossen")
    return frame, summary
