"""
Run-Konfiguration für TSGBT
JSON-Schema der CLI-Läufe: Datenschema, Hyperparameter, CV, Permutation,
Simulation, Benchmark und Kalibrierung. Unbekannte Schlüssel und falsche Typen
werden vor der Ausführung abgewiesen.
"""

from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union, get_args, get_origin, get_type_hints

from app.config import DEFAULT_CONFIG
from app.core.error_handler import AppException, ErrorCode
from app.core.logging_config import get_logger
from app.utils.io_utils import read_json

logger = get_logger(__name__)


@dataclass
class DataConfig:
    path: Optional[str] = None
    outcome: str = "y"
    treatment: str = "t"
    covariates: Optional[List[str]] = None
    weight: Optional[str] = None
    outcome_kind: str = "continuous"
    p_treat: float = 0.5
    remap_treatment: bool = False
    case_control_population_controls: Optional[float] = None
    # Spalten, die nie als Kovariate gelten (z.B. wahres τ aus simulate)
    exclude: List[str] = field(default_factory=lambda: ["true_tau"])


@dataclass
class BoostConfig:
    """Preset-Name plus einzelne Überschreibungen der BoostParams-Felder"""
    preset: Optional[str] = None
    n_rounds: Optional[int] = None
    learning_rate: Optional[float] = None
    gamma: Optional[float] = None
    reg_lambda: Optional[float] = None
    max_depth: Optional[int] = None
    min_child_weight: Optional[float] = None
    subsample: Optional[float] = None
    colsample: Optional[float] = None
    seed: Optional[int] = None
    tune_grid: Optional[Dict[str, List[float]]] = None
    tune_order: Optional[List[str]] = None

    def overrides(self) -> Dict[str, Any]:
        skip = ('preset', 'tune_grid', 'tune_order')
        return {f.name: getattr(self, f.name) for f in fields(self)
                if f.name not in skip and getattr(self, f.name) is not None}


@dataclass
class CVConfig:
    enabled: bool = True
    n_folds: int = DEFAULT_CONFIG["cv"]["n_folds"]
    patience: int = DEFAULT_CONFIG["cv"]["patience"]


@dataclass
class PermutationConfig:
    B: int = DEFAULT_CONFIG["permutation"]["n_permutations"]
    stat_kind: str = DEFAULT_CONFIG["permutation"]["stat_kind"]
    retune: bool = False
    plus_one: bool = False


@dataclass
class SimulationConfig:
    outcome_kind: str = "continuous"
    setting: str = "1"
    n: int = 300
    p: int = 50
    rho: Optional[float] = None
    cov_structure: Optional[str] = None
    alpha: Optional[List[float]] = None
    beta: Optional[List[float]] = None
    gamma: Optional[List[float]] = None
    beta_pairs: Optional[Dict[str, float]] = None
    sigma0: Optional[float] = None
    C: Optional[float] = None
    p_treat: Optional[float] = None

    def overrides(self) -> Dict[str, Any]:
        fixed = ('outcome_kind', 'setting', 'n', 'p')
        return {f.name: getattr(self, f.name) for f in fields(self)
                if f.name not in fixed and getattr(self, f.name) is not None}


@dataclass
class BenchmarkConfig:
    methods: List[str] = field(default_factory=lambda: ["tsgbt", "wgbt", "sgbt"])
    outcome_kind: str = "continuous"
    settings: List[str] = field(default_factory=lambda: ["2"])
    replicates: int = 20
    n_train: int = 300
    n_test: int = 1000
    p: int = 50
    rho: Optional[float] = None
    cov_structure: Optional[str] = None


@dataclass
class CalibrationConfig:
    scenarios: List[str] = field(default_factory=lambda: ["P1", "P2", "P3"])
    outcome_kinds: List[str] = field(default_factory=lambda: ["continuous", "binary"])
    n_datasets: int = 200
    B: int = 200
    alphas: List[float] = field(default_factory=lambda: [0.01, 0.05, 0.10])
    n_continuous: int = 300
    n_binary: int = 1500
    p: int = 50


@dataclass
class OutputConfig:
    threshold: Optional[float] = None
    holdout_repeats: int = 0
    holdout_fraction: float = 0.1
    a0_path: Optional[str] = None
    a0_column: str = "a0"
    model_path: Optional[str] = None


@dataclass
class RunConfig:
    """Gesamtkonfiguration eines CLI-Laufs"""
    seed: int = 0
    threads: Optional[int] = None
    mode: str = "tsgbt"
    estimand: Optional[str] = None
    data: DataConfig = field(default_factory=DataConfig)
    stage1: BoostConfig = field(default_factory=lambda: BoostConfig(preset="stage1_default"))
    stage2: BoostConfig = field(default_factory=lambda: BoostConfig(preset="stage2_default"))
    sgbt: BoostConfig = field(default_factory=lambda: BoostConfig(preset="sgbt_default"))
    cv: CVConfig = field(default_factory=CVConfig)
    permutation: PermutationConfig = field(default_factory=PermutationConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


def _type_ok(value: Any, hint: Any) -> bool:
    origin = get_origin(hint)
    if origin is Union:
        return any(_type_ok(value, arg) for arg in get_args(hint))
    if hint is type(None):
        return value is None
    if hint is bool:
        return isinstance(value, bool)
    if hint is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if hint is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if hint is str:
        return isinstance(value, str)
    if hint is Any:
        return True
    if origin in (list, List):
        (item,) = get_args(hint) or (Any,)
        return isinstance(value, list) and all(_type_ok(v, item) for v in value)
    if origin in (dict, Dict):
        key, item = get_args(hint) or (Any, Any)
        return isinstance(value, dict) and all(
            _type_ok(k, key) and _type_ok(v, item) for k, v in value.items()
        )
    return isinstance(value, hint)


def _build(cls, raw: Any, section: str):
    """Baut eine Dataclass aus einem JSON-Objekt und prüft Schlüssel und Typen"""
    if not isinstance(raw, dict):
        raise AppException(ErrorCode.CONFIG_INVALID_TYPE, f"Abschnitt '{section}' muss ein Objekt sein",
                           context={'section': section})
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise AppException(
            ErrorCode.CONFIG_UNKNOWN_KEY,
            f"Unbekannte Schlüssel in '{section}': {', '.join(unknown)}",
            context={'section': section, 'keys': unknown, 'allowed': sorted(known)}
        )
    values = {}
    for name, value in raw.items():
        hint = hints[name]
        key = f"{section}.{name}" if section else name
        if is_dataclass(hint):
            values[name] = _build(hint, value, key)
        elif not _type_ok(value, hint):
            raise AppException(
                ErrorCode.CONFIG_INVALID_TYPE,
                f"Ungültiger Typ für '{key}': {type(value).__name__}",
                context={'key': key, 'value': value}
            )
        else:
            values[name] = float(value) if hint in (float, Optional[float]) and value is not None else value
    return cls(**values)


def parse_run_config(raw: Dict[str, Any]) -> RunConfig:
    """Validiert ein bereits geladenes JSON-Objekt"""
    config = _build(RunConfig, raw, "")
    # ein BoostConfig-Abschnitt ohne preset erbt das Standard-Preset seines Abschnitts
    for name, preset in (("stage1", "stage1_default"), ("stage2", "stage2_default"), ("sgbt", "sgbt_default")):
        section = getattr(config, name)
        if section.preset is None:
            section.preset = preset
    return config


def load_run_config(path: Optional[Union[str, Path]]) -> RunConfig:
    """
    Lädt eine Run-Konfiguration aus JSON; ohne Pfad gelten die Standardwerte.

    Raises:
        AppException: CFG001 (Datei fehlt), CFG002 (JSON), CFG003 (Schlüssel), CFG004 (Typ)
    """
    if path is None:
        return RunConfig()
    config = parse_run_config(read_json(path))
    logger.info(f"Konfiguration geladen: {path}")
    return config
