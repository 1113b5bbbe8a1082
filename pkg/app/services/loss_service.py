"""
Loss Service für TSGBT
Gradienten und Hesse-Werte der vier Anpassungsprobleme (Stufe 1/2, stetig/binär),
Augmentationsterme und Transformationen auf die Schätzgrößen
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit, logit

from app.core.error_handler import AppException, ErrorCode
from app.core.logging_config import get_logger

logger = get_logger(__name__)

ESTIMANDS = ("meandiff", "riskratio")

LOSS_KINDS = (
    "stage1_mse",
    "stage1_logistic",
    "stage2_meandiff",
    "stage2_riskratio",
    "stage2_meandiff_noaug",
    "stage2_riskratio_noaug",
)

AUGMENTED_KINDS = ("stage2_meandiff", "stage2_riskratio")


def check_estimand(estimand: str) -> str:
    """Prüft den Schätzgrößen-Bezeichner"""
    if estimand not in ESTIMANDS:
        raise AppException(
            ErrorCode.VAL_UNKNOWN_IDENTIFIER,
            f"Unbekannte Schätzgröße '{estimand}'",
            context={'allowed': list(ESTIMANDS)}
        )
    return estimand


def estimand_for(outcome_kind: str) -> str:
    """Standard-Schätzgröße je Outcome-Typ"""
    return "riskratio" if outcome_kind == "binary" else "meandiff"


# ---------------------------------------------------------------------------
# Skalare Gradienten/Hesse-Paare
# ---------------------------------------------------------------------------

def grad_hess_stage1_continuous(y: float, a_cur: float, w: float) -> Tuple[float, float]:
    """Ableitungen von w·(y − A)² nach A"""
    return -2.0 * w * (y - a_cur), 2.0 * w


def grad_hess_stage1_binary(y: float, a_cur: float, w: float) -> Tuple[float, float]:
    """Ableitungen der gewichteten negativen Bernoulli-Log-Likelihood im Logit A"""
    s = float(expit(a_cur))
    return w * (s - y), w * s * (1.0 - s)


def grad_hess_stage2_continuous(
    y: float, a0: float, f_cur: float, t: float, w: float
) -> Tuple[float, float]:
    """Ableitungen von w·(y − a0 − F·t)² nach F"""
    return -2.0 * w * t * (y - a0 - f_cur * t), 2.0 * w


def grad_hess_stage2_binary(
    y: float, a0: float, f_cur: float, t: float, w: float
) -> Tuple[float, float]:
    """Ableitungen von w·[(1 − y − a0)·F·t + y·e^(−F·t)] nach F"""
    e = float(np.exp(-f_cur * t))
    return w * ((1.0 - y - a0) * t - y * t * e), w * y * e


# ---------------------------------------------------------------------------
# Verlustspezifikation (vektorisiert)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossSpec:
    """
    Benannter Verlust zweiter Ordnung.

    Stufe-2-Arten mit Augmentation benötigen einen zeilengleichen Vektor aug (â₀),
    die *_noaug-Arten dürfen keinen haben.
    """
    kind: str
    aug: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise AppException(
                ErrorCode.VAL_UNKNOWN_IDENTIFIER,
                f"Unbekannte Verlustart '{self.kind}'",
                context={'allowed': list(LOSS_KINDS)}
            )
        if self.kind in AUGMENTED_KINDS:
            if self.aug is None:
                raise AppException(
                    ErrorCode.VAL_INVALID_INPUT,
                    f"Verlustart '{self.kind}' benötigt einen Augmentationsvektor"
                )
            aug = np.asarray(self.aug, dtype=float).ravel()
            if not np.all(np.isfinite(aug)):
                raise AppException(ErrorCode.NUM_NOT_FINITE, "Augmentationsvektor enthält nicht-endliche Werte")
            aug.setflags(write=False)
            object.__setattr__(self, 'aug', aug)
        elif self.aug is not None:
            raise AppException(
                ErrorCode.VAL_INVALID_INPUT,
                f"Verlustart '{self.kind}' erlaubt keinen Augmentationsvektor"
            )

    @property
    def stage(self) -> int:
        return 1 if self.kind.startswith("stage1") else 2

    @property
    def estimand(self) -> str:
        if self.kind in ("stage1_mse", "stage2_meandiff", "stage2_meandiff_noaug"):
            return "meandiff"
        return "riskratio"

    def _a0(self, n: int) -> np.ndarray:
        if self.aug is None:
            return np.zeros(n)
        if self.aug.shape[0] != n:
            raise AppException(
                ErrorCode.VAL_MISALIGNED,
                "Augmentationsvektor passt nicht zur Zeilenzahl",
                context={'n_aug': int(self.aug.shape[0]), 'n': n}
            )
        return self.aug

    def restrict(self, rows: np.ndarray) -> "LossSpec":
        """Verlust auf eine Zeilenauswahl einschränken (z.B. für CV-Folds)"""
        if self.aug is None:
            return self
        return LossSpec(self.kind, self.aug[np.asarray(rows, dtype=int)])

    def grad_hess(
        self, y: np.ndarray, t: np.ndarray, w: np.ndarray, pred: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Gradienten G und Hesse-Werte H für alle Zeilen.

        Args:
            y: Outcomes
            t: Behandlungskodes (-1/+1)
            w: kombinierte Gewichte
            pred: aktuelle Vorhersage (A für Stufe 1, F für Stufe 2)
        """
        if self.kind == "stage1_mse":
            return -2.0 * w * (y - pred), 2.0 * w
        if self.kind == "stage1_logistic":
            s = expit(pred)
            return w * (s - y), w * s * (1.0 - s)
        a0 = self._a0(y.shape[0])
        if self.estimand == "meandiff":
            return -2.0 * w * t * (y - a0 - pred * t), 2.0 * w * np.ones_like(y)
        e = np.exp(-pred * t)
        return w * ((1.0 - y - a0) * t - y * t * e), w * y * e

    def loss_values(
        self, y: np.ndarray, t: np.ndarray, w: np.ndarray, pred: np.ndarray
    ) -> np.ndarray:
        """Verlustsummanden je Zeile (für Diagnosekurven und Finite-Differenzen)"""
        if self.kind == "stage1_mse":
            return w * (y - pred) ** 2
        if self.kind == "stage1_logistic":
            return w * (np.logaddexp(0.0, pred) - y * pred)
        a0 = self._a0(y.shape[0])
        if self.estimand == "meandiff":
            return w * (y - a0 - pred * t) ** 2
        return w * ((1.0 - y - a0) * pred * t + y * np.exp(-pred * t))

    def mean_loss(self, y: np.ndarray, t: np.ndarray, w: np.ndarray, pred: np.ndarray) -> float:
        """Gewichtsnormierter mittlerer Verlust"""
        return float(np.sum(self.loss_values(y, t, w, pred)) / np.sum(w))


def stage1_loss(outcome_kind: str) -> LossSpec:
    return LossSpec("stage1_logistic" if outcome_kind == "binary" else "stage1_mse")


def stage2_loss(estimand: str, a0: Optional[np.ndarray]) -> LossSpec:
    """Stufe-2-Verlust; a0=None liefert die Variante ohne Augmentation"""
    check_estimand(estimand)
    if a0 is None:
        return LossSpec(f"stage2_{estimand}_noaug")
    return LossSpec(f"stage2_{estimand}", np.asarray(a0, dtype=float))


def base_score(loss: LossSpec, y: np.ndarray, w: np.ndarray) -> float:
    """
    Startwert F₀ des Ensembles.

    Stufe 1 stetig: gewichteter Mittelwert; Stufe 1 binär: Logit des gewichteten
    Mittelwerts; Stufe 2: 0.
    """
    if loss.stage == 2:
        return 0.0
    mean = float(np.sum(w * y) / np.sum(w))
    if loss.kind == "stage1_mse":
        return mean
    if mean <= 0.0 or mean >= 1.0:
        raise AppException(
            ErrorCode.DATA_DEGENERATE,
            "Binärer Outcome ist konstant (nur 0 oder nur 1)",
            context={'mean': mean}
        )
    return float(logit(mean))


# ---------------------------------------------------------------------------
# Augmentation und Transformationen
# ---------------------------------------------------------------------------

def optimal_aug_general(mu1, mu0, f, p_treat: float, estimand: str):
    """
    Optimaler Augmentationsterm a₀ aus den armweisen Erwartungswerten.

    meandiff:  a₀ = μ₁(1−p) + μ₋₁p − F((1−p) − p)
    riskratio: a₀ = 1 − (1+e^(−F))μ₁(1−p) − (1+e^F)μ₋₁p

    Funktioniert skalar und elementweise auf Arrays.
    """
    check_estimand(estimand)
    if not (0.0 < p_treat < 1.0):
        raise AppException(ErrorCode.VAL_OUT_OF_RANGE, f"p_treat muss in (0,1) liegen: {p_treat}")
    mu1 = np.asarray(mu1, dtype=float)
    mu0 = np.asarray(mu0, dtype=float)
    f = np.asarray(f, dtype=float)
    q = 1.0 - p_treat
    if estimand == "meandiff":
        out = mu1 * q + mu0 * p_treat - f * (q - p_treat)
    else:
        if np.any((mu1 <= 0) | (mu1 >= 1) | (mu0 <= 0) | (mu0 >= 1)):
            raise AppException(
                ErrorCode.VAL_OUT_OF_RANGE,
                "Für riskratio müssen mu1 und mu0 in (0,1) liegen"
            )
        out = 1.0 - (1.0 + np.exp(-f)) * mu1 * q - (1.0 + np.exp(f)) * mu0 * p_treat
    return float(out) if out.ndim == 0 else out


def transform_stage1(a_hat, outcome_kind: str, estimand: Optional[str] = None):
    """
    Stufe-1-Vorhersage → â₀.

    stetig/meandiff: Identität; binär/riskratio: 1 − 2σ(A);
    binär/meandiff (Risikodifferenz): σ(A).
    """
    estimand = check_estimand(estimand or estimand_for(outcome_kind))
    a_hat = np.asarray(a_hat, dtype=float)
    if outcome_kind == "continuous":
        if estimand == "riskratio":
            raise AppException(
                ErrorCode.VAL_INVALID_INPUT,
                "riskratio ist nur für binäre Outcomes definiert"
            )
        out = a_hat.copy()
    elif estimand == "riskratio":
        out = 1.0 - 2.0 * expit(a_hat)
    else:
        out = expit(a_hat)
    return float(out) if out.ndim == 0 else out


def transform_hte(f_hat, estimand: str):
    """Stufe-2-Vorhersage F → τ (meandiff: 2F, riskratio: e^F)"""
    check_estimand(estimand)
    f_hat = np.asarray(f_hat, dtype=float)
    out = 2.0 * f_hat if estimand == "meandiff" else np.exp(f_hat)
    return float(out) if out.ndim == 0 else out


def inverse_transform_hte(tau, estimand: str):
    """τ → F (Umkehrung von transform_hte)"""
    check_estimand(estimand)
    tau = np.asarray(tau, dtype=float)
    out = 0.5 * tau if estimand == "meandiff" else np.log(tau)
    return float(out) if out.ndim == 0 else out
