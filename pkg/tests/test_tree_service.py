import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.config import ParamPresets
from app.core.error_handler import AppException, ErrorCode
from app.services.loss_service import stage1_loss
from app.services.tree_service import (
    BoostingState,
    BoostParams,
    Ensemble,
    RegressionTree,
    boost,
    grow_tree,
    leaf_objective,
    leaf_weight,
    predict_ensemble,
    predict_tree,
    single_leaf_tree,
)

EXACT = BoostParams(reg_lambda=0.0, gamma=0.0, min_child_weight=0.0, max_depth=6)


@pytest.fixture
def stump():
    """Baum aus dem Beispiel x₁ = (0,0,1,1), g = (−1,−1,+1,+1)"""
    x = np.array([[0.0], [0.0], [1.0], [1.0]])
    return grow_tree(np.array([-1.0, -1.0, 1.0, 1.0]), np.ones(4), x, EXACT)


class TestGrowTree:
    def test_single_leaf_weight(self):
        tree = grow_tree(np.array([-4.0]), np.array([8.0]), np.zeros((1, 1)), BoostParams(reg_lambda=1.0))
        assert tree.n_leaves == 1
        assert tree.value[0] == pytest.approx(4.0 / 9.0)

    def test_no_profitable_split(self):
        tree = grow_tree(np.array([-2.0, -2.0]), np.array([4.0, 4.0]), np.array([[0.0], [1.0]]), EXACT)
        assert tree.n_leaves == 1
        assert tree.value[0] == pytest.approx(0.5)

    def test_stump(self, stump):
        assert stump.feature[0] == 0
        assert stump.threshold[0] == pytest.approx(0.5)
        assert stump.gain[0] == pytest.approx(2.0)
        assert stump.value[stump.left[0]] == pytest.approx(1.0)
        assert stump.value[stump.right[0]] == pytest.approx(-1.0)
        assert stump.n_leaves == 2 and stump.depth == 1

    def test_gamma_prunes_split(self):
        x = np.array([[0.0], [0.0], [1.0], [1.0]])
        tree = grow_tree(np.array([-1.0, -1.0, 1.0, 1.0]), np.ones(4), x, EXACT.with_updates(gamma=2.0))
        assert tree.n_leaves == 1

    def test_min_child_weight(self):
        x = np.array([[0.0], [1.0], [1.0], [1.0]])
        tree = grow_tree(np.array([-3.0, 1.0, 1.0, 1.0]), np.ones(4), x, EXACT.with_updates(min_child_weight=2.0))
        assert tree.n_leaves == 1

    def test_tie_prefers_lowest_feature(self):
        x = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
        tree = grow_tree(np.array([-1.0, -1.0, 1.0, 1.0]), np.ones(4), x, EXACT)
        assert tree.feature[0] == 0

    def test_max_depth(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((200, 3))
        g = rng.standard_normal(200)
        tree = grow_tree(g, np.ones(200), x, EXACT.with_updates(max_depth=2))
        assert tree.depth <= 2 and tree.n_leaves <= 4

    def test_negative_hessian(self):
        with pytest.raises(AppException) as exc:
            grow_tree(np.zeros(2), np.array([1.0, -1.0]), np.zeros((2, 1)), EXACT)
        assert exc.value.code == ErrorCode.VAL_NEGATIVE_HESSIAN

    def test_misaligned(self):
        with pytest.raises(AppException) as exc:
            grow_tree(np.zeros(3), np.ones(2), np.zeros((2, 1)), EXACT)
        assert exc.value.code == ErrorCode.VAL_MISALIGNED

    def test_empty(self):
        with pytest.raises(AppException) as exc:
            grow_tree(np.zeros(0), np.zeros(0), np.zeros((0, 1)), EXACT)
        assert exc.value.code == ErrorCode.VAL_INVALID_INPUT

    @given(
        g=st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=30),
        reg_lambda=st.floats(0.1, 5.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_leaf_weights_minimize_leaf_objective(self, g, reg_lambda):
        g = np.asarray(g)
        h = np.ones_like(g)
        x = np.linspace(0.0, 1.0, g.size).reshape(-1, 1)
        tree = grow_tree(g, h, x, BoostParams(reg_lambda=reg_lambda, max_depth=3, min_child_weight=0.0))
        leaves = tree.apply(x)
        for leaf in np.unique(leaves):
            g_sum, h_sum = g[leaves == leaf].sum(), h[leaves == leaf].sum()
            best = leaf_objective(g_sum, h_sum, tree.value[leaf], reg_lambda)
            for delta in (-0.1, 0.1):
                assert best <= leaf_objective(g_sum, h_sum, tree.value[leaf] + delta, reg_lambda) + 1e-12

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gain_is_objective_decrease(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((60, 3))
        g = rng.standard_normal(60)
        h = rng.uniform(0.5, 2.0, 60)
        params = BoostParams(reg_lambda=1.5, gamma=0.3, max_depth=3, min_child_weight=0.0)
        tree = grow_tree(g, h, x, params)
        assert tree.n_leaves > 1

        # Zeilen je Knoten; Kinder haben stets größere Indizes als ihr Elternknoten
        rows = {0: np.arange(60)}
        for node in range(tree.n_nodes):
            if tree.feature[node] >= 0:
                idx = rows[node]
                go_left = x[idx, tree.feature[node]] < tree.threshold[node]
                rows[tree.left[node]], rows[tree.right[node]] = idx[go_left], idx[~go_left]

        def best_objective(node):
            g_sum, h_sum = g[rows[node]].sum(), h[rows[node]].sum()
            return leaf_objective(g_sum, h_sum, leaf_weight(g_sum, h_sum, params.reg_lambda), params.reg_lambda)

        for node in np.flatnonzero(tree.feature >= 0):
            decrease = best_objective(node) - best_objective(tree.left[node]) - best_objective(tree.right[node])
            assert tree.gain[node] == pytest.approx(decrease - params.gamma, rel=1e-9, abs=1e-9)
            assert tree.gain[node] > 0.0

    def test_subsample_reproducible(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((50, 4))
        g = rng.standard_normal(50)
        params = BoostParams(subsample=0.5, colsample=0.5, reg_lambda=1.0)
        a = grow_tree(g, np.ones(50), x, params, np.random.default_rng(7))
        b = grow_tree(g, np.ones(50), x, params, np.random.default_rng(7))
        assert a.to_dict() == b.to_dict()


class TestPredict:
    def test_single_leaf(self):
        assert predict_tree(single_leaf_tree(0.5, 2), [3.0, -1.0]) == 0.5

    def test_routing(self, stump):
        assert predict_tree(stump, [0.0]) == pytest.approx(1.0)
        assert predict_tree(stump, [1.0]) == pytest.approx(-1.0)

    def test_ensemble_arithmetic(self, stump):
        assert predict_ensemble([], 0.1, 0.0, [1.0]) == 0.0
        trees = [single_leaf_tree(0.5, 1), single_leaf_tree(0.3, 1)]
        assert predict_ensemble(trees, 0.1, 0.0, [1.0]) == pytest.approx(0.08)
        assert predict_ensemble([stump], 1.0, 0.2, [1.0]) == pytest.approx(-0.8)

    def test_dimension_mismatch(self, stump):
        with pytest.raises(AppException) as exc:
            stump.predict(np.zeros((2, 3)))
        assert exc.value.code == ErrorCode.MODEL_DIMENSION_MISMATCH

    def test_vectorized_matches_rowwise(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((40, 3))
        ensemble = boost(x, x[:, 0] ** 2, np.ones(40), np.ones(40), stage1_loss("continuous"),
                         BoostParams(n_rounds=5, max_depth=3))
        rowwise = [predict_ensemble(ensemble.trees, ensemble.learning_rate, ensemble.base, row) for row in x]
        assert np.allclose(ensemble.predict(x), rowwise)


class TestEnsembleFormat:
    def test_json_form(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((30, 2))
        ensemble = boost(x, x[:, 1], np.ones(30), np.ones(30), stage1_loss("continuous"),
                         BoostParams(n_rounds=3, max_depth=2), feature_names=["a", "b"])
        restored = Ensemble.from_dict(json.loads(json.dumps(ensemble.to_dict())))
        assert restored.feature_names == ["a", "b"]
        assert np.array_equal(restored.predict(x), ensemble.predict(x))

    def test_invalid_child_reference(self):
        broken = single_leaf_tree(0.0, 1).to_dict()
        broken.update(feature=[0], left=[5], right=[6])
        with pytest.raises(AppException) as exc:
            RegressionTree.from_dict(broken, 1)
        assert exc.value.code == ErrorCode.MODEL_INVALID_FORMAT

    def test_unknown_loss(self):
        payload = Ensemble([], 0.1, 0.0, "stage1_mse", ["a"]).to_dict()
        payload["loss"] = "hinge"
        with pytest.raises(AppException) as exc:
            Ensemble.from_dict(payload)
        assert exc.value.code == ErrorCode.MODEL_INVALID_FORMAT

    def test_truncate(self):
        ensemble = Ensemble([single_leaf_tree(1.0, 1), single_leaf_tree(1.0, 1)], 0.5, 0.0, "stage1_mse", ["a"])
        assert ensemble.truncate(1).predict(np.zeros((1, 1)))[0] == pytest.approx(0.5)


class TestBoosting:
    def test_constant_outcome(self):
        x = np.random.default_rng(4).standard_normal((20, 2))
        ensemble = boost(x, np.full(20, 3.5), np.ones(20), np.ones(20), stage1_loss("continuous"),
                         BoostParams(n_rounds=10))
        assert np.allclose(ensemble.predict(x), 3.5)

    def test_train_curve_non_increasing(self):
        x = np.random.default_rng(5).standard_normal((60, 2))
        state = BoostingState(x, x[:, 0], np.ones(60), np.ones(60), stage1_loss("continuous"),
                              BoostParams(learning_rate=0.3, max_depth=2)).advance(10)
        assert len(state.train_curve) == 11
        assert all(b <= a + 1e-12 for a, b in zip(state.train_curve, state.train_curve[1:]))

    def test_zero_rounds(self):
        x = np.zeros((4, 1))
        ensemble = boost(x, np.array([1.0, 2.0, 3.0, 4.0]), np.ones(4), np.ones(4), stage1_loss("continuous"),
                         BoostParams(n_rounds=0))
        assert ensemble.n_rounds == 0
        assert np.allclose(ensemble.predict(x), 2.5)


class TestBoostParams:
    def test_from_preset_with_override(self):
        params = BoostParams.from_preset("stage2_default", n_rounds=7)
        assert params.n_rounds == 7 and params.gamma == 8.0 and params.min_child_weight == 12.0

    def test_unknown_preset(self):
        with pytest.raises(AppException) as exc:
            BoostParams.from_preset("nope")
        assert exc.value.code == ErrorCode.VAL_UNKNOWN_IDENTIFIER
        assert exc.value.context["available"] == sorted(ParamPresets.get_all_presets())

    def test_override_leaves_preset_untouched(self):
        stored = ParamPresets.get_preset("test_fast")
        assert BoostParams.from_preset("test_fast", n_rounds=3).n_rounds == 3
        assert ParamPresets.get_preset("test_fast") == stored
        assert BoostParams.from_preset("test_fast") == BoostParams(**stored)

    @pytest.mark.parametrize("field, value", [("learning_rate", 0.0), ("max_depth", 0), ("subsample", 1.5),
                                              ("n_rounds", -1), ("gamma", -1.0)])
    def test_out_of_range(self, field, value):
        with pytest.raises(AppException) as exc:
            BoostParams(**{field: value})
        assert exc.value.code == ErrorCode.VAL_OUT_OF_RANGE


def test_leaf_weight_zero_denominator():
    assert leaf_weight(1.0, 0.0, 0.0) == 0.0
