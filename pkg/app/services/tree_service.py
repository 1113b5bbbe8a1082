"""
Tree Service für TSGBT
Regressionsbäume zweiter Ordnung (exakte Greedy-Splitsuche), Ensembles,
Boosting-Zustand und JSON-Form der Modelle
"""

from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config import ParamPresets
from app.core.error_handler import AppException, ErrorCode
from app.core.logging_config import get_logger
from app.services.loss_service import LOSS_KINDS, LossSpec, base_score
from app.workers.parallel_worker import spawn_rng

logger = get_logger(__name__)

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class BoostParams:
    """Hyperparameter eines Boosting-Laufs"""
    n_rounds: int = 100
    learning_rate: float = 0.1
    gamma: float = 0.0
    reg_lambda: float = 1.0
    max_depth: int = 6
    min_child_weight: float = 1.0
    subsample: float = 1.0
    colsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        checks = [
            ('n_rounds', isinstance(self.n_rounds, (int, np.integer)) and self.n_rounds >= 0, "ganze Zahl ≥ 0"),
            ('learning_rate', 0.0 < self.learning_rate <= 1.0, "in (0,1]"),
            ('gamma', self.gamma >= 0.0, "≥ 0"),
            ('reg_lambda', self.reg_lambda >= 0.0, "≥ 0"),
            ('max_depth', isinstance(self.max_depth, (int, np.integer)) and self.max_depth >= 1, "ganze Zahl ≥ 1"),
            ('min_child_weight', self.min_child_weight >= 0.0, "≥ 0"),
            ('subsample', 0.0 < self.subsample <= 1.0, "in (0,1]"),
            ('colsample', 0.0 < self.colsample <= 1.0, "in (0,1]"),
            ('seed', isinstance(self.seed, (int, np.integer)) and self.seed >= 0, "ganze Zahl ≥ 0"),
        ]
        for name, ok, rule in checks:
            if not ok:
                raise AppException(
                    ErrorCode.VAL_OUT_OF_RANGE,
                    f"Hyperparameter {name}={getattr(self, name)} ungültig (erwartet {rule})",
                    context={'parameter': name, 'value': getattr(self, name)}
                )

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "BoostParams":
        """Lädt einen Parametersatz aus ParamPresets und überschreibt einzelne Werte"""
        try:
            values = ParamPresets.get_preset(name)
        except KeyError:
            raise AppException(
                ErrorCode.VAL_UNKNOWN_IDENTIFIER,
                f"Unbekanntes Preset '{name}'",
                context={'available': sorted(ParamPresets.get_all_presets())}
            )
        values.update(overrides)
        return cls(**values)

    def with_updates(self, **changes) -> "BoostParams":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def leaf_weight(g_sum: float, h_sum: float, reg_lambda: float) -> float:
    """ω* = −ΣG/(ΣH+λ); 0 bei verschwindendem Nenner"""
    denom = h_sum + reg_lambda
    if denom <= 0.0:
        return 0.0
    return -g_sum / denom


def _score(g_sum, h_sum, reg_lambda):
    """G²/(H+λ) elementweise, 0 wo der Nenner verschwindet"""
    denom = h_sum + reg_lambda
    g_sq = np.square(g_sum)
    return np.divide(g_sq, denom, out=np.zeros_like(g_sq, dtype=float), where=denom > 0)


def split_gain(g_left, h_left, g_right, h_right, reg_lambda: float, gamma: float):
    """½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − (G_L+G_R)²/(H_L+H_R+λ)] − γ"""
    return 0.5 * (
        _score(g_left, h_left, reg_lambda)
        + _score(g_right, h_right, reg_lambda)
        - _score(np.add(g_left, g_right), np.add(h_left, h_right), reg_lambda)
    ) - gamma


def leaf_objective(g_sum: float, h_sum: float, weight: float, reg_lambda: float) -> float:
    """Penalisiertes Zielfunktional eines Blatts ohne γ: Gω + ½(H+λ)ω²"""
    return g_sum * weight + 0.5 * (h_sum + reg_lambda) * weight * weight


@dataclass(frozen=True)
class RegressionTree:
    """
    Achsenparalleler Binärbaum in Array-Form.

    Knoten i ist ein Blatt, wenn feature[i] == -1; sonst geht eine Zeile nach
    left[i], falls x[feature[i]] < threshold[i], andernfalls nach right[i].
    value enthält an Blättern die Gewichte ω, gain an inneren Knoten den Split-Gewinn,
    cover die Hesse-Summe je Knoten.
    """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    cover: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def split_features(self) -> np.ndarray:
        return self.feature[self.feature >= 0]

    def split_gains(self) -> np.ndarray:
        return self.gain[self.feature >= 0]

    def _check_dim(self, x: np.ndarray):
        if x.shape[1] != self.n_features:
            raise AppException(
                ErrorCode.MODEL_DIMENSION_MISMATCH,
                f"Kovariatenzahl {x.shape[1]} passt nicht zum Baum ({self.n_features})",
                context={'expected': self.n_features, 'got': int(x.shape[1])}
            )

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Blattindex q(x) für jede Zeile"""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self._check_dim(x)
        node = np.zeros(x.shape[0], dtype=int)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            cur = node[active]
            go_left = x[active, self.feature[cur]] < self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.value[self.apply(x)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'feature': self.feature.tolist(),
            'threshold': self.threshold.tolist(),
            'left': self.left.tolist(),
            'right': self.right.tolist(),
            'value': self.value.tolist(),
            'gain': self.gain.tolist(),
            'cover': self.cover.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], n_features: int) -> "RegressionTree":
        try:
            arrays = {
                'feature': np.asarray(data['feature'], dtype=int),
                'threshold': np.asarray(data['threshold'], dtype=float),
                'left': np.asarray(data['left'], dtype=int),
                'right': np.asarray(data['right'], dtype=int),
                'value': np.asarray(data['value'], dtype=float),
                'gain': np.asarray(data['gain'], dtype=float),
                'cover': np.asarray(data['cover'], dtype=float),
            }
        except (KeyError, TypeError, ValueError) as e:
            raise AppException(ErrorCode.MODEL_INVALID_FORMAT, f"Baum unvollständig oder fehlerhaft: {e}")
        sizes = {len(v) for v in arrays.values()}
        if len(sizes) != 1 or not sizes.pop():
            raise AppException(ErrorCode.MODEL_INVALID_FORMAT, "Baum-Arrays haben unterschiedliche Längen")
        internal = arrays['feature'] >= 0
        n_nodes = len(arrays['feature'])
        children = np.concatenate([arrays['left'][internal], arrays['right'][internal]])
        if np.any(arrays['feature'] >= n_features) or np.any((children <= 0) | (children >= n_nodes)):
            raise AppException(ErrorCode.MODEL_INVALID_FORMAT, "Baum verweist auf ungültige Knoten oder Merkmale")
        return cls(n_features=n_features, **arrays)


def single_leaf_tree(weight: float, n_features: int, cover: float = 0.0) -> RegressionTree:
    return RegressionTree(
        feature=np.array([-1]), threshold=np.array([0.0]), left=np.array([-1]),
        right=np.array([-1]), value=np.array([float(weight)]), gain=np.array([0.0]),
        cover=np.array([float(cover)]), n_features=n_features
    )


def _best_split(
    x_node: np.ndarray, g_node: np.ndarray, h_node: np.ndarray,
    g_sum: float, h_sum: float, params: BoostParams
) -> Optional[Tuple[int, int, float]]:
    """
    Exakte Splitsuche über alle Spalten von x_node.
    Liefert (Spaltenposition, Schwelle, Gewinn) oder None. Bei Gleichstand gewinnt
    die niedrigere Spalte, dann die niedrigere Schwelle.
    """
    order = np.argsort(x_node, axis=0, kind="stable")
    xs = np.take_along_axis(x_node, order, axis=0)
    g_left = np.cumsum(g_node[order], axis=0)[:-1]
    h_left = np.cumsum(h_node[order], axis=0)[:-1]
    g_right = g_sum - g_left
    h_right = h_sum - h_left

    gain = split_gain(g_left, h_left, g_right, h_right, params.reg_lambda, params.gamma)
    valid = (
        (xs[1:] > xs[:-1])
        & (h_left >= params.min_child_weight)
        & (h_right >= params.min_child_weight)
    )
    gain = np.where(valid, gain, -np.inf)

    # Spalten zuerst, damit argmax die niedrigste Spalte bevorzugt
    flat = gain.T.ravel()
    best = int(np.argmax(flat))
    best_gain = float(flat[best])
    if not best_gain > 0.0:
        return None
    col, pos = divmod(best, gain.shape[0])
    lower, upper = xs[pos, col], xs[pos + 1, col]
    threshold = float(0.5 * (lower + upper))
    if threshold <= lower:
        threshold = float(upper)
    return col, threshold, best_gain


def grow_tree(
    g: np.ndarray,
    h: np.ndarray,
    x: np.ndarray,
    params: BoostParams,
    rng: Optional[np.random.Generator] = None
) -> RegressionTree:
    """
    Wächst einen Regressionsbaum gegen Gradienten g und Hesse-Werte h.

    Zeilen werden ohne Zurücklegen unterabgetastet (subsample), Spalten einmal
    pro Baum (colsample). Splits mit Gewinn ≤ 0 oder einem Kind mit
    Hesse-Summe < min_child_weight werden verworfen.

    Raises:
        AppException: leere Eingabe, negative Hesse-Werte, nicht zeilengleiche Vektoren
    """
    g = np.asarray(g, dtype=float).ravel()
    h = np.asarray(h, dtype=float).ravel()
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    n, p = x.shape
    if n == 0 or g.size == 0:
        raise AppException(ErrorCode.VAL_INVALID_INPUT, "grow_tree: leere Eingabe")
    if g.shape[0] != n or h.shape[0] != n:
        raise AppException(
            ErrorCode.VAL_MISALIGNED,
            "grow_tree: g, h und x sind nicht zeilengleich",
            context={'n_g': int(g.shape[0]), 'n_h': int(h.shape[0]), 'n_x': n}
        )
    if np.any(h < 0):
        raise AppException(ErrorCode.VAL_NEGATIVE_HESSIAN, "grow_tree: negative Hesse-Werte")
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
        raise AppException(ErrorCode.NUM_NOT_FINITE, "grow_tree: nicht-endliche Gradienten oder Hesse-Werte")

    rng = rng if rng is not None else np.random.default_rng(params.seed)
    rows = np.arange(n)
    if params.subsample < 1.0:
        size = max(1, int(round(params.subsample * n)))
        rows = np.sort(rng.choice(n, size=size, replace=False))
    cols = np.arange(p)
    if params.colsample < 1.0:
        size = max(1, int(round(params.colsample * p)))
        cols = np.sort(rng.choice(p, size=size, replace=False))

    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[float] = []
    gain: List[float] = []
    cover: List[float] = []

    def new_node(idx: np.ndarray) -> int:
        g_sum = float(np.sum(g[idx]))
        h_sum = float(np.sum(h[idx]))
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(leaf_weight(g_sum, h_sum, params.reg_lambda))
        gain.append(0.0)
        cover.append(h_sum)
        return len(feature) - 1

    stack = [(new_node(rows), rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= params.max_depth or idx.size < 2:
            continue
        found = _best_split(
            x[np.ix_(idx, cols)], g[idx], h[idx],
            float(np.sum(g[idx])), cover[node], params
        )
        if found is None:
            continue
        col, thr, best_gain = found
        f = int(cols[col])
        mask = x[idx, f] < thr
        left_idx, right_idx = idx[mask], idx[~mask]
        feature[node] = f
        threshold[node] = thr
        gain[node] = best_gain
        left[node] = new_node(left_idx)
        right[node] = new_node(right_idx)
        # rechts zuerst auf den Stack, damit links zuerst wächst
        stack.append((right[node], right_idx, depth + 1))
        stack.append((left[node], left_idx, depth + 1))

    return RegressionTree(
        feature=np.asarray(feature, dtype=int),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=int),
        right=np.asarray(right, dtype=int),
        value=np.asarray(value, dtype=float),
        gain=np.asarray(gain, dtype=float),
        cover=np.asarray(cover, dtype=float),
        n_features=p
    )


def predict_tree(tree: RegressionTree, x_row: Sequence[float]) -> float:
    """ω_q(x) für eine einzelne Zeile"""
    row = np.asarray(x_row, dtype=float).reshape(1, -1)
    return float(tree.predict(row)[0])


def predict_ensemble(
    trees: Sequence[RegressionTree], learning_rate: float, base: float, x_row: Sequence[float]
) -> float:
    """base + η·Σ_k ω_k(x) für eine einzelne Zeile"""
    row = np.asarray(x_row, dtype=float).reshape(1, -1)
    pred = np.full(1, float(base))
    for tree in trees:
        pred = pred + learning_rate * tree.predict(row)
    return float(pred[0])


@dataclass
class Ensemble:
    """Angepasstes Boosting-Ensemble mit Startwert, Shrinkage und Verlustart"""
    trees: List[RegressionTree]
    learning_rate: float
    base: float
    loss_kind: str
    feature_names: List[str]

    @property
    def n_rounds(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise AppException(
                ErrorCode.MODEL_DIMENSION_MISMATCH,
                f"Kovariatenzahl {x.shape[1]} passt nicht zum Modell ({self.n_features})",
                context={'expected': self.n_features, 'got': int(x.shape[1])}
            )
        pred = np.full(x.shape[0], self.base)
        for tree in self.trees:
            pred = pred + self.learning_rate * tree.predict(x)
        return pred

    def truncate(self, n_rounds: int) -> "Ensemble":
        return Ensemble(list(self.trees[:n_rounds]), self.learning_rate, self.base,
                        self.loss_kind, list(self.feature_names))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'format_version': MODEL_FORMAT_VERSION,
            'loss': self.loss_kind,
            'learning_rate': self.learning_rate,
            'base': self.base,
            'feature_names': list(self.feature_names),
            'trees': [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Ensemble":
        try:
            names = [str(n) for n in data['feature_names']]
            loss_kind = data['loss']
            ensemble = cls(
                trees=[RegressionTree.from_dict(t, len(names)) for t in data['trees']],
                learning_rate=float(data['learning_rate']),
                base=float(data['base']),
                loss_kind=loss_kind,
                feature_names=names,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise AppException(ErrorCode.MODEL_INVALID_FORMAT, f"Ensemble unvollständig: {e}")
        if loss_kind not in LOSS_KINDS:
            raise AppException(ErrorCode.MODEL_INVALID_FORMAT, f"Unbekannte Verlustart '{loss_kind}' im Modell")
        return ensemble


class BoostingState:
    """
    Laufender Boosting-Prozess auf einem Trainingsdatensatz.

    Hält die aktuellen Vorhersagen und optional eine Validierungsmenge, deren
    mittlerer Verlust nach jeder Runde (inklusive Runde 0) protokolliert wird.
    Baum k verwendet den Zufallsstrom spawn_rng(seed, *rng_key, k).
    """

    def __init__(
        self,
        x: np.ndarray,
        y: np.ndarray,
        t: np.ndarray,
        w: np.ndarray,
        loss: LossSpec,
        params: BoostParams,
        rng_key: Tuple[int, ...] = (),
        eval_set: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, LossSpec]] = None,
        base: Optional[float] = None
    ):
        self.x, self.y, self.t, self.w = x, y, t, w
        self.loss = loss
        self.params = params
        self.rng_key = tuple(rng_key)
        self.base = base_score(loss, y, w) if base is None else float(base)
        self.pred = np.full(y.shape[0], self.base)
        self.trees: List[RegressionTree] = []
        self.train_curve = [loss.mean_loss(y, t, w, self.pred)]
        self.eval_set = eval_set
        self.eval_curve: List[float] = []
        if eval_set is not None:
            xe, ye, te, we, loss_e = eval_set
            self.eval_pred = np.full(ye.shape[0], self.base)
            self.eval_curve.append(loss_e.mean_loss(ye, te, we, self.eval_pred))

    @property
    def n_rounds(self) -> int:
        return len(self.trees)

    def advance(self, k: int = 1) -> "BoostingState":
        """Führt k weitere Boosting-Runden aus"""
        for _ in range(int(k)):
            rng = spawn_rng(self.params.seed, *self.rng_key, len(self.trees))
            g, h = self.loss.grad_hess(self.y, self.t, self.w, self.pred)
            tree = grow_tree(g, h, self.x, self.params, rng)
            self.trees.append(tree)
            self.pred = self.pred + self.params.learning_rate * tree.predict(self.x)
            self.train_curve.append(self.loss.mean_loss(self.y, self.t, self.w, self.pred))
            if self.eval_set is not None:
                xe, ye, te, we, loss_e = self.eval_set
                self.eval_pred = self.eval_pred + self.params.learning_rate * tree.predict(xe)
                self.eval_curve.append(loss_e.mean_loss(ye, te, we, self.eval_pred))
        return self

    def to_ensemble(self, feature_names: Sequence[str]) -> Ensemble:
        return Ensemble(list(self.trees), self.params.learning_rate, self.base,
                        self.loss.kind, list(feature_names))


def boost(
    x: np.ndarray,
    y: np.ndarray,
    t: np.ndarray,
    w: np.ndarray,
    loss: LossSpec,
    params: BoostParams,
    n_rounds: Optional[int] = None,
    feature_names: Optional[Sequence[str]] = None,
    rng_key: Tuple[int, ...] = ()
) -> Ensemble:
    """Boosting ohne Validierung über n_rounds (Default params.n_rounds) Runden"""
    rounds = params.n_rounds if n_rounds is None else int(n_rounds)
    state = BoostingState(x, y, t, w, loss, params, rng_key=rng_key).advance(rounds)
    names = list(feature_names) if feature_names is not None else [f"x{j + 1}" for j in range(x.shape[1])]
    logger.debug(f"Boosting abgeschlossen: {loss.kind}, {rounds} Runden, Trainingsverlust {state.train_curve[-1]:.6g}")
    return state.to_ensemble(names)
