"""
Simulation Service für TSGBT
Simulierte Studiendaten: stetige Settings 1-4, binäre Settings 1-3,
Permutationsszenarien P1-P3, Kovarianzstrukturen und der Risikopaar-Löser
"""

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from app.core.error_handler import AppException, ErrorCode
from app.core.logging_config import get_logger
from app.services.data_service import OUTCOME_KINDS, TrialDataset
from app.workers.parallel_worker import spawn_rng

logger = get_logger(__name__)

COV_STRUCTURES = ("ar1", "compound_symmetric", "independent")

_A_MAIN = 1.0 / np.sqrt(3.0)
_A_MAIN_WEAK = 1.0 / np.sqrt(6.0)


def _dense_alpha(alpha0: float, value: float, first: int = 3, last: int = 10) -> Dict[int, float]:
    coef = {0: alpha0}
    coef.update({j: value for j in range(first, last + 1)})
    return coef


# Koeffizienten je (Outcome-Typ, Setting). Indizes: alpha/beta ab 0 (Intercept),
# gamma ab 1, Paare (i, j) mit 1 ≤ i < j.
SETTINGS: Dict[Tuple[str, str], Dict[str, Any]] = {
    ("continuous", "1"): {
        'alpha': {0: 0.4, 1: 0.6, 2: -0.6, 3: 0.6, 4: 0.6},
        'beta': {0: 0.8, 1: 0.8, 2: -0.8, 3: 0.8, 4: 0.8},
        'gamma': {},
        'beta_pairs': {},
        'tau_scale': 1.0,
    },
    ("continuous", "2"): {
        'alpha': _dense_alpha(_A_MAIN, _A_MAIN / 2.0),
        'beta': {0: 0.8, 1: 1.6, 2: -1.6, 3: 1.6, 4: -1.6},
        'gamma': {1: 1.6, 2: -1.6, 3: 1.6, 4: -1.6},
        'beta_pairs': {(1, 2): 1.6, (1, 5): 1.6},
        'tau_scale': 1.0,
    },
    ("continuous", "3"): {
        'alpha': _dense_alpha(_A_MAIN, _A_MAIN / 2.0),
        'beta': {0: 0.8, 1: 0.8, 2: -0.8, 3: 0.8, 4: -0.8},
        'gamma': {1: 0.8, 2: -0.8, 3: 0.8, 4: -0.8},
        'beta_pairs': {(1, 2): 0.8, (1, 5): 0.8},
        'tau_scale': 1.0,
    },
    ("continuous", "4"): {
        'alpha': _dense_alpha(_A_MAIN, _A_MAIN / 2.0),
        'beta': {0: 0.8},
        'gamma': {},
        'beta_pairs': {},
        'tau_scale': 1.0,
    },
    ("binary", "1"): {
        'alpha': {0: 0.4, 1: 0.6, 2: -0.6, 3: 0.6, 4: 0.6},
        'beta': {0: 0.3, 1: 0.3, 2: 0.4, 3: 0.3, 4: 0.4},
        'gamma': {1: 0.4, 2: -0.4, 3: 0.4, 4: 0.4},
        'beta_pairs': {(1, 2): 0.5, (1, 5): 0.5},
        'C': 2.5,
        'tau_scale': 2.0,
    },
    ("binary", "2"): {
        'alpha': {0: 0.4, 1: 0.6, 2: -0.6, 3: 0.6, 4: 0.6},
        'beta': {0: 0.1, 1: 0.1, 2: 0.2, 3: 0.1, 4: 0.2},
        'gamma': {1: 0.2, 2: -0.2, 3: 0.2, 4: 0.2},
        'beta_pairs': {(1, 2): 0.5, (1, 5): 0.5},
        'C': 2.5,
        'tau_scale': 2.0,
    },
    ("binary", "3"): {
        'alpha': {0: 0.4, 1: 0.6, 2: -0.6, 3: 0.6, 4: 0.6},
        'beta': {0: 0.3},
        'gamma': {},
        'beta_pairs': {},
        'C': 2.0,
        'tau_scale': 2.0,
    },
}

# Permutationsszenarien: konstanter Behandlungseffekt, variierende Haupteffekte.
# Stetig: Y = Haupteffekt + β₀·T + σ₀ε (τ = 2β₀); binär: log(P₁/P₋₁) = β₀.
_SCENARIO_ALPHA = {
    "P1": _dense_alpha(_A_MAIN, _A_MAIN / 2.0),
    "P2": _dense_alpha(_A_MAIN_WEAK, _A_MAIN_WEAK / 2.0),
    "P3": {},
}
for _name, _alpha in _SCENARIO_ALPHA.items():
    SETTINGS[("continuous", _name)] = {
        'alpha': _alpha, 'beta': {0: 0.8}, 'gamma': {}, 'beta_pairs': {}, 'tau_scale': 2.0,
    }
    SETTINGS[("binary", _name)] = {
        'alpha': _alpha, 'beta': {0: 0.3}, 'gamma': {}, 'beta_pairs': {}, 'C': 2.0, 'tau_scale': 1.0,
    }

SCENARIOS = tuple(_SCENARIO_ALPHA)


def available_settings(outcome_kind: Optional[str] = None) -> List[str]:
    return sorted({s for kind, s in SETTINGS if outcome_kind in (None, kind)})


def _dense(coef: Dict[int, float], length: int, offset: int = 0) -> List[float]:
    """Sparse Koeffizienten → dichter Vektor; Indizes jenseits der Länge entfallen"""
    out = [0.0] * length
    for idx, value in coef.items():
        pos = int(idx) - offset
        if 0 <= pos < length:
            out[pos] = float(value)
    return out


def _pair_key(i: int, j: int) -> str:
    return f"{i},{j}"


@dataclass
class SimSpec:
    """
    Simulationsdesign.

    alpha: α₀..α_p (Länge p+1), beta: β₀..β_p (Länge p+1), gamma: γ₁..γ_p (Länge p),
    beta_pairs: sparse Wechselwirkungen {"i,j": β_ij} mit 1 ≤ i < j ≤ p.
    tau_scale: stetig τ = tau_scale·F (Y enthält tau_scale/2·F·T);
    binär log τ = tau_scale·F.
    """
    outcome_kind: str
    setting: str
    n: int
    p: int
    rho: float = 0.5
    cov_structure: str = "ar1"
    alpha: List[float] = field(default_factory=list)
    beta: List[float] = field(default_factory=list)
    gamma: List[float] = field(default_factory=list)
    beta_pairs: Dict[str, float] = field(default_factory=dict)
    sigma0: float = 2.0
    C: float = 2.5
    tau_scale: float = 1.0
    p_treat: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.outcome_kind not in OUTCOME_KINDS:
            raise AppException(ErrorCode.VAL_UNKNOWN_IDENTIFIER, f"Unbekannter outcome_kind '{self.outcome_kind}'")
        if self.cov_structure not in COV_STRUCTURES:
            raise AppException(
                ErrorCode.VAL_UNKNOWN_IDENTIFIER,
                f"Unbekannte Kovarianzstruktur '{self.cov_structure}'",
                context={'allowed': list(COV_STRUCTURES)}
            )
        if self.n < 1 or self.p < 1:
            raise AppException(ErrorCode.VAL_OUT_OF_RANGE, "n und p müssen positiv sein",
                               context={'n': self.n, 'p': self.p})
        if not (-1.0 < self.rho < 1.0):
            raise AppException(ErrorCode.VAL_OUT_OF_RANGE, f"rho muss in (-1,1) liegen: {self.rho}")
        if not self.sigma0 > 0:
            raise AppException(ErrorCode.VAL_OUT_OF_RANGE, f"sigma0 muss positiv sein: {self.sigma0}")
        if not (0.0 < self.p_treat < 1.0):
            raise AppException(ErrorCode.VAL_OUT_OF_RANGE, f"p_treat muss in (0,1) liegen: {self.p_treat}")
        self.setting = str(self.setting)
        self.alpha = _dense(dict(enumerate(self.alpha)), self.p + 1)
        self.beta = _dense(dict(enumerate(self.beta)), self.p + 1)
        self.gamma = _dense(dict(enumerate(self.gamma, start=1)), self.p, offset=1)
        pairs = {}
        for key, value in self.beta_pairs.items():
            i, j = (int(v) for v in str(key).split(","))
            if not 1 <= i < j:
                raise AppException(ErrorCode.VAL_INVALID_INPUT, f"Ungültiges Paar '{key}' (erwartet 1 ≤ i < j)")
            if j <= self.p and value != 0:
                pairs[_pair_key(i, j)] = float(value)
        self.beta_pairs = pairs

    def hte_index(self, x: np.ndarray) -> np.ndarray:
        """F(x) = β₀ + Σβ_jx_j + Σγ_jx_j² + Σβ_ij x_i x_j"""
        beta = np.asarray(self.beta)
        gamma = np.asarray(self.gamma)
        f = beta[0] + x @ beta[1:] + (x * x) @ gamma
        for key, value in sorted(self.beta_pairs.items()):
            i, j = (int(v) for v in key.split(","))
            f = f + value * x[:, i - 1] * x[:, j - 1]
        return f

    def main_effect(self, x: np.ndarray) -> np.ndarray:
        """(α₀ + Σα_jx_j)²"""
        alpha = np.asarray(self.alpha)
        return (alpha[0] + x @ alpha[1:]) ** 2

    def with_updates(self, **changes) -> "SimSpec":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SimSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise AppException(ErrorCode.CONFIG_UNKNOWN_KEY, f"Unbekannte SimSpec-Schlüssel: {unknown}",
                               context={'keys': unknown})
        return cls(**data)


def sim_spec(outcome_kind: str, setting: Union[str, int], n: int, p: int, **overrides) -> SimSpec:
    """
    SimSpec mit den Standardkoeffizienten des gewählten Settings.

    Raises:
        AppException: unbekanntes Setting (VAL005)
    """
    setting = str(setting).upper() if str(setting).upper().startswith("P") else str(setting)
    preset = SETTINGS.get((outcome_kind, setting))
    if preset is None:
        raise AppException(
            ErrorCode.VAL_UNKNOWN_IDENTIFIER,
            f"Unbekanntes Setting '{setting}' für {outcome_kind}",
            context={'available': available_settings(outcome_kind)}
        )
    values = {
        'outcome_kind': outcome_kind,
        'setting': setting,
        'n': n,
        'p': p,
        'alpha': _dense(preset['alpha'], p + 1),
        'beta': _dense(preset['beta'], p + 1),
        'gamma': _dense(preset['gamma'], p, offset=1),
        'beta_pairs': {_pair_key(i, j): v for (i, j), v in preset['beta_pairs'].items()},
        'tau_scale': preset['tau_scale'],
    }
    if 'C' in preset:
        values['C'] = preset['C']
    values.update(overrides)
    return SimSpec(**values)


@dataclass
class TruthedDataset:
    """Simulierter Datensatz mit wahrem τ(x) und armweisen Erwartungswerten"""
    data: TrialDataset
    true_tau: np.ndarray
    mu1: np.ndarray
    mu0: np.ndarray
    spec: SimSpec

    @property
    def prevalence(self) -> float:
        """Empirische Ereignisrate (bzw. Mittelwert des Outcomes)"""
        return float(np.mean(self.data.y))


def sample_covariates(
    n: int, p: int, rho: float, structure: str, rng: np.random.Generator
) -> np.ndarray:
    """
    n Ziehungen aus N(0, Σ).

    ar1: Σ_ij = ρ^|i−j| über die Rekursion x_j = ρx_{j−1} + √(1−ρ²)z_j;
    compound_symmetric: Σ_ij = ρ + (1−ρ)·1[i=j] (benötigt ρ > −1/(p−1));
    independent: Σ = I.
    """
    if structure not in COV_STRUCTURES:
        raise AppException(ErrorCode.VAL_UNKNOWN_IDENTIFIER, f"Unbekannte Kovarianzstruktur '{structure}'")
    if not (-1.0 < rho < 1.0):
        raise AppException(ErrorCode.VAL_OUT_OF_RANGE, f"rho muss in (-1,1) liegen: {rho}")
    if structure == "independent":
        return rng.standard_normal((n, p))
    if structure == "ar1":
        z = rng.standard_normal((n, p))
        x = np.empty_like(z)
        x[:, 0] = z[:, 0]
        scale = np.sqrt(1.0 - rho * rho)
        for j in range(1, p):
            x[:, j] = rho * x[:, j - 1] + scale * z[:, j]
        return x
    if p > 1 and rho <= -1.0 / (p - 1):
        raise AppException(
            ErrorCode.VAL_OUT_OF_RANGE,
            f"compound_symmetric mit rho={rho} ist für p={p} nicht positiv definit",
            context={'rho': rho, 'p': p, 'lower_bound': -1.0 / (p - 1)}
        )
    cov = np.full((p, p), rho)
    np.fill_diagonal(cov, 1.0)
    return rng.multivariate_normal(np.zeros(p), cov, size=n, method="cholesky")


def solve_risk_pair(log_rr, log_odds_product):
    """
    Löst log(P₁/P₋₁) = r und log(P₁P₋₁/((1−P₁)(1−P₋₁))) = q nach (P₁, P₋₁).

    Bisektion in u = log P₋₁ auf (−∞, min(0, −r)); die Zielfunktion ist dort
    streng monoton wachsend. Skalare und Arrays werden unterstützt.
    """
    r = np.asarray(log_rr, dtype=float)
    q = np.asarray(log_odds_product, dtype=float)
    r, q = np.broadcast_arrays(r, q)
    scalar = r.ndim == 0
    r = np.atleast_1d(r).astype(float)
    q = np.atleast_1d(q).astype(float)

    def h(u):
        with np.errstate(divide='ignore', invalid='ignore'):
            return 2.0 * u + r - np.log1p(-np.exp(u + r)) - np.log1p(-np.exp(u)) - q

    hi = np.minimum(0.0, -r)
    width = np.ones_like(r)
    lo = hi - width
    for _ in range(200):
        pending = h(lo) >= 0.0
        if not pending.any():
            break
        width = np.where(pending, 2.0 * width, width)
        lo = np.where(pending, hi - width, lo)

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi) | (hi - lo < 1e-14)):
            break
        above = h(mid) >= 0.0
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    u = 0.5 * (lo + hi)
    p1 = np.exp(u + r)
    p0 = np.exp(u)
    if scalar:
        return float(p1[0]), float(p0[0])
    return p1, p0


def _assign_treatment(n: int, p_treat: float, rng: np.random.Generator) -> np.ndarray:
    return np.where(rng.random(n) < p_treat, 1.0, -1.0)


def gen_continuous(spec: SimSpec, rng: Optional[np.random.Generator] = None) -> TruthedDataset:
    """Y = (α'x̃)² + (tau_scale/2)·F(x)·T + σ₀ε"""
    if spec.outcome_kind != "continuous":
        raise AppException(ErrorCode.VAL_INVALID_INPUT, "gen_continuous benötigt ein stetiges Design")
    rng = rng if rng is not None else spawn_rng(spec.seed)
    x = sample_covariates(spec.n, spec.p, spec.rho, spec.cov_structure, rng)
    t = _assign_treatment(spec.n, spec.p_treat, rng)
    eps = rng.standard_normal(spec.n)
    main = spec.main_effect(x)
    half_effect = 0.5 * spec.tau_scale * spec.hte_index(x)
    y = main + half_effect * t + spec.sigma0 * eps
    data = TrialDataset(y=y, t=t, x=x, p_treat=spec.p_treat, outcome_kind="continuous")
    return TruthedDataset(data=data, true_tau=2.0 * half_effect, mu1=main + half_effect,
                          mu0=main - half_effect, spec=spec)


def gen_binary(spec: SimSpec, rng: Optional[np.random.Generator] = None) -> TruthedDataset:
    """Relativrisiko-Modell log(P₁/P₋₁) = tau_scale·F mit Odds-Produkt −C − (α'x̃)²"""
    if spec.outcome_kind != "binary":
        raise AppException(ErrorCode.VAL_INVALID_INPUT, "gen_binary benötigt ein binäres Design")
    rng = rng if rng is not None else spawn_rng(spec.seed)
    x = sample_covariates(spec.n, spec.p, spec.rho, spec.cov_structure, rng)
    t = _assign_treatment(spec.n, spec.p_treat, rng)
    u = rng.random(spec.n)
    r = spec.tau_scale * spec.hte_index(x)
    q = -spec.C - spec.main_effect(x)
    p1, p0 = solve_risk_pair(r, q)
    y = (u < np.where(t > 0, p1, p0)).astype(float)
    data = TrialDataset(y=y, t=t, x=x, p_treat=spec.p_treat, outcome_kind="binary")
    result = TruthedDataset(data=data, true_tau=np.exp(r), mu1=p1, mu0=p0, spec=spec)
    logger.debug(f"Binäre Simulation Setting {spec.setting}: Prävalenz {result.prevalence:.3f}")
    return result


def generate(spec: SimSpec, rng: Optional[np.random.Generator] = None) -> TruthedDataset:
    if spec.outcome_kind == "binary":
        return gen_binary(spec, rng)
    return gen_continuous(spec, rng)


def gen_permutation_scenario(
    scenario: str,
    outcome_kind: str,
    n: int,
    p: int,
    rng: Optional[np.random.Generator] = None,
    **overrides
) -> TruthedDataset:
    """Null-HTE-Datensatz (konstanter Effekt) für P1, P2 oder P3"""
    if str(scenario).upper() not in SCENARIOS:
        raise AppException(
            ErrorCode.VAL_UNKNOWN_IDENTIFIER,
            f"Unbekanntes Permutationsszenario '{scenario}'",
            context={'available': list(SCENARIOS)}
        )
    return generate(sim_spec(outcome_kind, scenario, n, p, **overrides), rng)
