"""
Kommandozeile für TSGBT
Unterbefehle fit, predict, permtest, simulate, benchmark und calibrate.
Jeder Befehl liefert (success, message, results); Artefakte landen im --out-Verzeichnis.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from app.config import DEFAULT_CONFIG
from app.config.run_config import BoostConfig, RunConfig, load_run_config
from app.core.debug_manager import get_debug_manager
from app.core.error_codes import find_error_by_code
from app.core.error_handler import AppException, ErrorCode, handle_error
from app.core.logging_config import get_logger, update_all_loggers_for_debug
from app.managers.benchmark_manager import (
    BenchmarkSettings,
    CalibrationSettings,
    run_benchmark,
    run_calibration,
)
from app.managers.cv_manager import CVSettings, sequential_tune
from app.managers.permutation_manager import permutation_test
from app.managers.two_stage_manager import (
    STAGE1_KEY,
    STAGE2_KEY,
    MODES,
    SGBTModel,
    TwoStageModel,
    default_threshold,
    fit_sgbt,
    fit_stage1,
    fit_tsgbt,
    holdout_proportions,
    load_model,
    save_model,
)
from app.services.data_service import CsvSchema, TrialDataset, dataset_summary, load_covariates, load_csv
from app.services.loss_service import estimand_for, stage1_loss, stage2_loss, transform_stage1
from app.services.metrics_service import tau_summary, variable_importance
from app.services.simulation_service import SimSpec, generate, sim_spec
from app.services.tree_service import BoostParams
from app.utils.io_utils import write_csv, write_json
from app.workers.parallel_worker import resolve_n_jobs

logger = get_logger(__name__)

CommandResult = Tuple[bool, str, Dict[str, Any]]

SUBCOMMANDS = ("fit", "predict", "permtest", "simulate", "benchmark", "calibrate")


# ---------------------------------------------------------------------------
# Hilfsfunktionen
# ---------------------------------------------------------------------------

def boost_params(section: BoostConfig, master_seed: int) -> BoostParams:
    """BoostParams aus Preset + Überschreibungen; ohne eigenen Seed gilt der Master-Seed"""
    overrides = section.overrides()
    overrides.setdefault('seed', master_seed)
    return BoostParams.from_preset(section.preset, **overrides)


def cv_settings(config: RunConfig, n_jobs: int) -> CVSettings:
    return CVSettings(enabled=config.cv.enabled, n_folds=config.cv.n_folds,
                      patience=config.cv.patience, n_jobs=n_jobs)


def load_dataset(config: RunConfig) -> TrialDataset:
    if not config.data.path:
        raise AppException(ErrorCode.CONFIG_MISSING_KEY, "Keine Datendatei angegeben (--data oder data.path)")
    d = config.data
    schema = CsvSchema(
        outcome=d.outcome, treatment=d.treatment, covariates=d.covariates, weight=d.weight,
        outcome_kind=d.outcome_kind, p_treat=d.p_treat, remap_treatment=d.remap_treatment,
        case_control_population_controls=d.case_control_population_controls, exclude=d.exclude
    )
    return load_csv(d.path, schema)


def load_a0_file(path: str, column: str, n: int) -> np.ndarray:
    """Extern geschätztes â₀ aus einer CSV-Spalte"""
    a0 = load_covariates(path, [column])[:, 0]
    if a0.shape[0] != n:
        raise AppException(
            ErrorCode.VAL_MISALIGNED,
            f"a0-Datei hat {a0.shape[0]} Zeilen, Datensatz {n}",
            context={'file': path, 'n_a0': int(a0.shape[0]), 'n': n}
        )
    return a0


def configured_a0(config: RunConfig, n: int) -> Tuple[Optional[np.ndarray], str]:
    """â₀ aus output.a0_path (nur mode='tsgbt'); sonst (None, 'external')"""
    if not config.output.a0_path or config.mode != "tsgbt":
        return None, "external"
    a0 = load_a0_file(config.output.a0_path, config.output.a0_column, n)
    return a0, f"file:{Path(config.output.a0_path).name}#{config.output.a0_column}"


def permutation_a0(config: RunConfig, model: TwoStageModel, data: TrialDataset) -> Optional[np.ndarray]:
    """
    â₀ für die Permutationsreplikate, passend zur Anpassung des Modells.

    Stufe 1 im Modell → deren Vorhersage; WGBT → keines; externes â₀ → erneut aus
    output.a0_path geladen, damit Replikate denselben augmentierten Verlust nutzen.
    """
    if model.stage1 is not None:
        return model.predict_a0(data.x)
    if model.mode == "wgbt":
        return None
    if not config.output.a0_path:
        raise AppException(
            ErrorCode.CONFIG_MISSING_KEY,
            f"Modell wurde mit externem â₀ angepasst (a0_source={model.a0_source}); "
            f"output.a0_path muss für den Permutationstest gesetzt sein",
            context={'a0_source': model.a0_source}
        )
    recorded = model.a0_source[len("file:"):].split("#")[0] if model.a0_source.startswith("file:") else None
    if recorded and recorded != Path(config.output.a0_path).name:
        logger.warning(f"a0-Datei {config.output.a0_path} weicht von der Modellquelle {model.a0_source} ab")
    return load_a0_file(config.output.a0_path, config.output.a0_column, data.n)


def _maybe_tune(
    data: TrialDataset, section: BoostConfig, params: BoostParams, loss, cv: CVSettings,
    rng_key: Tuple[int, ...], out: Path, name: str
) -> Tuple[BoostParams, Optional[str]]:
    if not section.tune_grid:
        return params, None
    tuned, table = sequential_tune(data, loss, params, section.tune_grid, section.tune_order, cv,
                                   rng_key=rng_key)
    path = write_csv(out / f"tuning_{name}.csv", table)
    return tuned, str(path.name)


# ---------------------------------------------------------------------------
# Unterbefehle
# ---------------------------------------------------------------------------

def cmd_fit(config: RunConfig, out: Path, n_jobs: int) -> CommandResult:
    """Passt TSGBT/WGBT/SGBT an und schreibt Modell, τ̂, Diagnosekurven und Wichtigkeit"""
    data = load_dataset(config)
    estimand = config.estimand or estimand_for(data.outcome_kind)
    cv = cv_settings(config, n_jobs)
    threshold = config.output.threshold if config.output.threshold is not None else default_threshold(estimand)
    artifacts: List[str] = []
    summary: Dict[str, Any] = {
        'data': dataset_summary(data),
        'mode': config.mode,
        'estimand': estimand,
        'seed': config.seed,
        'cv': {'enabled': cv.enabled, 'n_folds': cv.n_folds, 'patience': cv.patience},
    }

    if config.mode == "sgbt":
        params = boost_params(config.sgbt, config.seed)
        model = fit_sgbt(data, params, estimand, cv)
        summary['M_treated'] = model.treated.n_rounds
        summary['M_control'] = model.control.n_rounds
        artifacts.append(write_csv(out / "curve_treated.csv", model.curve_treated.to_frame()).name)
        artifacts.append(write_csv(out / "curve_control.csv", model.curve_control.to_frame()).name)
        summary['params'] = params.to_dict()
    else:
        params1 = boost_params(config.stage1, config.seed)
        params2 = boost_params(config.stage2, config.seed)
        a0_ext, a0_source = configured_a0(config, data.n)
        stage1_fit = None
        if config.mode == "tsgbt" and a0_ext is None:
            params1, table = _maybe_tune(data, config.stage1, params1, stage1_loss(data.outcome_kind),
                                         cv, STAGE1_KEY, out, "stage1")
            if table:
                artifacts.append(table)
        if config.stage2.tune_grid:
            a0_tune = a0_ext
            if config.mode == "tsgbt" and a0_tune is None:
                # Stufe 1 einmal anpassen, für Tuning und finale Anpassung
                stage1_fit = fit_stage1(data, params1, cv)
                a0_tune = transform_stage1(stage1_fit[0].predict(data.x), data.outcome_kind, estimand)
            params2, table = _maybe_tune(data, config.stage2, params2, stage2_loss(estimand, a0_tune),
                                         cv, STAGE2_KEY, out, "stage2")
            artifacts.append(table)

        model = fit_tsgbt(data, params1, params2, estimand, mode=config.mode, a0=a0_ext,
                          a0_source=a0_source, cv1=cv, cv2=cv, stage1_fit=stage1_fit)
        summary['a0_source'] = model.a0_source
        summary['M_a'] = model.stage1.n_rounds if model.stage1 else None
        summary['M'] = model.stage2.n_rounds
        summary['params1'] = model.params1.to_dict() if model.params1 else None
        summary['params2'] = params2.to_dict()
        if model.curve1 is not None:
            artifacts.append(write_csv(out / "curve_stage1.csv", model.curve1.to_frame()).name)
        artifacts.append(write_csv(out / "curve_stage2.csv", model.curve2.to_frame()).name)
        importance = variable_importance(model)
        artifacts.append(write_csv(out / "importance.csv", importance.to_frame()).name)
        summary['top_features'] = importance.top(20)

        if config.output.holdout_repeats > 0:
            holdout = holdout_proportions(
                data, params1, params2, estimand, threshold, config.output.holdout_repeats,
                config.output.holdout_fraction, config.seed, cv
            )
            artifacts.append(write_csv(out / "holdout.csv", holdout).name)
            summary['holdout_mean_proportion'] = float(holdout['proportion_below_threshold'].mean())

    tau = model.predict_tau(data.x)
    artifacts.append(write_csv(out / "tau_hat.csv", pd.DataFrame({'row': np.arange(data.n), 'tau_hat': tau})).name)
    artifacts.append(save_model(model, out / "model.json").name)
    summary['tau'] = tau_summary(tau, threshold)
    summary['artifacts'] = sorted(artifacts + ["summary.json"])
    write_json(out / "summary.json", summary)

    message = (
        f"fit ({config.mode}): n={data.n}, p={data.p}, "
        + (f"M_a={summary.get('M_a')}, M={summary.get('M')}, " if config.mode != "sgbt" else "")
        + f"Median τ̂={summary['tau']['median']:.4g}, "
        f"Anteil τ̂<{threshold:g}: {100 * summary['tau']['proportion_below_threshold']:.1f}%"
    )
    return True, message, summary


def cmd_predict(config: RunConfig, out: Path, n_jobs: int, model_path: Optional[str] = None) -> CommandResult:
    """Bewertet eine CSV mit einem gespeicherten Modell"""
    path = model_path or config.output.model_path
    if not path:
        raise AppException(ErrorCode.CONFIG_MISSING_KEY, "Kein Modell angegeben (--model oder output.model_path)")
    if not config.data.path:
        raise AppException(ErrorCode.CONFIG_MISSING_KEY, "Keine Datendatei angegeben (--data oder data.path)")
    model = load_model(path)
    x = load_covariates(config.data.path, model.feature_names)
    tau = model.predict_tau(x)
    frame = pd.DataFrame({'row': np.arange(x.shape[0]), 'tau_hat': tau})
    write_csv(out / "predictions.csv", frame)
    return True, f"predict: {x.shape[0]} Zeilen bewertet ({model.mode})", {'n': int(x.shape[0])}


def cmd_permtest(config: RunConfig, out: Path, n_jobs: int, model_path: Optional[str] = None) -> CommandResult:
    """Permutationstest; nutzt ein gespeichertes Modell oder passt neu an"""
    data = load_dataset(config)
    estimand = config.estimand or estimand_for(data.outcome_kind)
    cv = cv_settings(config, n_jobs)
    path = model_path or config.output.model_path
    if path:
        model = load_model(path)
        if not isinstance(model, TwoStageModel):
            raise AppException(ErrorCode.MODEL_INVALID_FORMAT, "Permutationstest benötigt ein Zwei-Stufen-Modell")
        params2 = model.params2
        estimand = model.estimand
    else:
        if config.mode not in ("tsgbt", "wgbt"):
            raise AppException(ErrorCode.VAL_INVALID_INPUT, f"permtest unterstützt mode={config.mode} nicht")
        params2 = boost_params(config.stage2, config.seed)
        a0_ext, a0_source = configured_a0(config, data.n)
        model = fit_tsgbt(data, boost_params(config.stage1, config.seed), params2, estimand,
                          mode=config.mode, a0=a0_ext, a0_source=a0_source, cv1=cv, cv2=cv)
    a0 = permutation_a0(config, model, data)

    perm = config.permutation
    result = permutation_test(
        data, a0, params2, estimand, B=perm.B, stat_kind=perm.stat_kind, seed=config.seed,
        observed=model.stage2, cv=cv, retune=perm.retune, plus_one=perm.plus_one, n_jobs=n_jobs
    )
    result.extra.update({'mode': model.mode, 'estimand': estimand, 'a0_source': model.a0_source})
    write_csv(out / "permutation_stats.csv", result.to_frame())
    write_json(out / "permutation.json", result.to_summary())
    return True, (
        f"permtest: {result.stat_kind} beobachtet={result.observed_stat:.6g}, "
        f"B={result.B}, p={result.p_value:.4f}"
    ), result.to_summary()


def cmd_simulate(config: RunConfig, out: Path, n_jobs: int) -> CommandResult:
    """Erzeugt einen simulierten Datensatz mit wahrem τ"""
    s = config.simulation
    spec = sim_spec(s.outcome_kind, s.setting, s.n, s.p, seed=config.seed, **s.overrides())
    echoed = spec.to_dict()
    if SimSpec.from_dict(echoed) != spec:
        raise AppException(ErrorCode.GEN_UNEXPECTED_ERROR, "SimSpec-Echo ist nicht verlustfrei")
    truthed = generate(spec)
    data = truthed.data
    columns = {'y': data.y, 't': data.t.astype(int)}
    columns.update({name: data.x[:, j] for j, name in enumerate(data.feature_names)})
    columns['true_tau'] = truthed.true_tau
    write_csv(out / "data.csv", pd.DataFrame(columns))
    write_json(out / "spec.json", {'spec': echoed, 'prevalence': truthed.prevalence})
    return True, (
        f"simulate: {s.outcome_kind} Setting {spec.setting}, n={spec.n}, p={spec.p}, "
        f"Mittelwert y={truthed.prevalence:.4f}"
    ), {'spec': echoed, 'prevalence': truthed.prevalence}


def cmd_benchmark(config: RunConfig, out: Path, n_jobs: int) -> CommandResult:
    """Methodenvergleich (sCORR/MSE) auf simulierten Daten"""
    b = config.benchmark
    overrides = {k: v for k, v in (('rho', b.rho), ('cov_structure', b.cov_structure)) if v is not None}
    bench = BenchmarkSettings(
        methods=b.methods, outcome_kind=b.outcome_kind, settings=b.settings, replicates=b.replicates,
        n_train=b.n_train, n_test=b.n_test, p=b.p, seed=config.seed, sim_overrides=overrides
    )
    frame, summary = run_benchmark(
        bench, boost_params(config.stage1, config.seed), boost_params(config.stage2, config.seed),
        boost_params(config.sgbt, config.seed), cv_settings(config, 1), n_jobs=n_jobs, progress=logger.info
    )
    write_csv(out / "benchmark.csv", frame)
    write_json(out / "benchmark_summary.json", summary)
    return True, f"benchmark: {len(frame)} Ergebniszeilen geschrieben", summary


def cmd_calibrate(config: RunConfig, out: Path, n_jobs: int) -> CommandResult:
    """Fehler-1.-Art-Kalibrierung des Permutationstests"""
    c = config.calibration
    cal = CalibrationSettings(
        scenarios=c.scenarios, outcome_kinds=c.outcome_kinds, n_datasets=c.n_datasets, B=c.B,
        alphas=c.alphas, n_continuous=c.n_continuous, n_binary=c.n_binary, p=c.p,
        stat_kind=config.permutation.stat_kind, seed=config.seed
    )
    frame, summary = run_calibration(
        cal, boost_params(config.stage1, config.seed), boost_params(config.stage2, config.seed),
        cv_settings(config, 1), n_jobs=n_jobs, progress=logger.info
    )
    write_csv(out / "calibration_pvalues.csv", frame)
    write_json(out / "calibration_summary.json", summary)
    return True, f"calibrate: {len(frame)} Datensätze ausgewertet", summary


COMMANDS: Dict[str, Callable[..., CommandResult]] = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "permtest": cmd_permtest,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
    "calibrate": cmd_calibrate,
}


# ---------------------------------------------------------------------------
# Parser und Ausführung
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsgbt",
        description=DEFAULT_CONFIG["app_name"],
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=COMMANDS[name].__doc__.strip().splitlines()[0])
        p.add_argument("--config", help="JSON-Konfigurationsdatei")
        p.add_argument("--data", help="CSV-Datei (überschreibt data.path)")
        p.add_argument("--out", default="out", help="Ausgabeverzeichnis (Standard: out)")
        p.add_argument("--seed", type=int, help="Master-Seed (überschreibt seed)")
        p.add_argument("--threads", type=int, help="Anzahl Worker (überschreibt TSGBT_THREADS)")
        p.add_argument("--mode", choices=MODES, help="Verfahren (überschreibt mode)")
        p.add_argument("--debug", action="store_true", help="Debug-Ausgaben aktivieren")
        if name in ("predict", "permtest"):
            p.add_argument("--model", help="Gespeichertes Modell (model.json)")
    return parser


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    """CLI-Flags haben Vorrang vor der JSON-Konfiguration"""
    if args.data:
        config.data.path = args.data
    if args.seed is not None:
        if args.seed < 0:
            raise AppException(ErrorCode.VAL_OUT_OF_RANGE, f"--seed muss ≥ 0 sein: {args.seed}")
        config.seed = args.seed
    if args.threads is not None:
        config.threads = args.threads
    if args.mode:
        config.mode = args.mode
    if config.mode not in MODES:
        raise AppException(ErrorCode.CONFIG_INVALID_TYPE, f"Ungültiger Modus '{config.mode}'",
                           context={'allowed': list(MODES)})
    return config


def exit_code_for(code: ErrorCode) -> int:
    """2 für Konfigurations-, Validierungs- und Datenfehler, sonst 1"""
    return 2 if code.value[:3] in ("CFG", "VAL", "DAT") else 1


def run_command(argv: Optional[List[str]] = None) -> Tuple[int, CommandResult]:
    """Parst argv, führt den Unterbefehl aus und liefert (Exit-Code, Ergebnis)"""
    args = build_parser().parse_args(argv)
    if args.debug:
        get_debug_manager().enable()
        update_all_loggers_for_debug()
    try:
        config = apply_overrides(load_run_config(args.config), args)
        n_jobs = resolve_n_jobs(config.threads)
        out = Path(args.out)
        logger.info(f"Starte '{args.command}' (seed={config.seed}, n_jobs={n_jobs}, out={out})")
        func = COMMANDS[args.command]
        if args.command in ("predict", "permtest"):
            result = func(config, out, n_jobs, model_path=args.model)
        else:
            result = func(config, out, n_jobs)
        return (0 if result[0] else 1), result
    except Exception as e:
        error = handle_error(e, context={'command': args.command})
        return exit_code_for(error.code), (False, str(error), {'error': error.to_dict()})


def error_hint(error: Dict[str, Any]) -> Optional[str]:
    """Erster Lösungsvorschlag aus der statischen Fehlerliste"""
    info = find_error_by_code(error.get('code', ''))
    if info and info.get('solutions'):
        return info['solutions'][0]
    return None


def main(argv: Optional[List[str]] = None) -> int:
    code, (success, message, results) = run_command(argv)
    if success:
        print(message)
        return code
    print(message, file=sys.stderr)
    hint = error_hint(results.get('error', {}))
    if hint:
        print(f"Hinweis: {hint}", file=sys.stderr)
    return code
