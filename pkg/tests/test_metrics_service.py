import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.core.error_handler import AppException, ErrorCode
from app.services.loss_service import stage1_loss
from app.services.metrics_service import mse_scale, spearman, tau_summary, variable_importance
from app.services.tree_service import BoostParams, Ensemble, RegressionTree, boost


def split_tree(feature, gain, n_features):
    return RegressionTree(
        feature=np.array([feature, -1, -1]), threshold=np.array([0.0, 0.0, 0.0]),
        left=np.array([1, -1, -1]), right=np.array([2, -1, -1]),
        value=np.array([0.0, 1.0, -1.0]), gain=np.array([gain, 0.0, 0.0]),
        cover=np.array([2.0, 1.0, 1.0]), n_features=n_features
    )


class TestSpearman:
    def test_identical(self):
        assert spearman([3.0, 1.0, 2.0], [3.0, 1.0, 2.0]) == pytest.approx(1.0)

    def test_reversed(self):
        assert spearman([1.0, 2.0, 3.0, 4.0], [4.0, 3.0, 2.0, 1.0]) == pytest.approx(-1.0)

    def test_by_hand(self):
        assert spearman([1.0, 2.0, 3.0], [1.0, 3.0, 2.0]) == pytest.approx(0.5)

    def test_constant_input(self):
        with pytest.raises(AppException) as exc:
            spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        assert exc.value.code == ErrorCode.NUM_UNDEFINED

    @given(values=st.lists(st.integers(-1000, 1000), min_size=3, max_size=30, unique=True))
    @settings(max_examples=50)
    def test_invariant_under_monotone_transform(self, values):
        a = np.asarray(values, dtype=float)
        b = np.arange(a.size, dtype=float)[::-1]
        assert spearman(np.exp(a / 50.0), b) == pytest.approx(spearman(a, b))


class TestMse:
    def test_exact(self):
        assert mse_scale([1.0, 2.0], [1.0, 2.0], "meandiff") == 0.0

    def test_meandiff(self):
        assert mse_scale([1.0, 1.0], [0.0, 2.0], "meandiff") == pytest.approx(1.0)

    def test_riskratio_log_scale(self):
        assert mse_scale([2.0, 2.0], [1.0, 4.0], "riskratio") == pytest.approx(np.log(2.0) ** 2)

    def test_riskratio_requires_positive(self):
        with pytest.raises(AppException):
            mse_scale([0.0, 1.0], [1.0, 1.0], "riskratio")


class TestImportance:
    def test_single_feature(self):
        ensemble = Ensemble([split_tree(2, 3.0, 4), split_tree(2, 1.5, 4)], 0.1, 0.0, "stage1_mse",
                            ["x1", "x2", "x3", "x4"])
        report = variable_importance(ensemble)
        assert report.as_dict() == {"x3": 100.0, "x1": 0.0, "x2": 0.0, "x4": 0.0}
        assert report.top(1) == ["x3"]

    def test_normalization(self):
        ensemble = Ensemble([split_tree(0, 4.0, 2), split_tree(1, 2.0, 2)], 0.1, 0.0, "stage1_mse", ["a", "b"])
        report = variable_importance(ensemble)
        assert report.feature_names == ["a", "b"]
        assert report.relative == pytest.approx([100.0, 50.0])
        assert list(report.to_frame().columns) == ["feature", "raw_gain", "relative"]

    def test_empty_ensemble(self):
        report = variable_importance(Ensemble([], 0.1, 0.0, "stage1_mse", ["a"]))
        assert report.is_empty

    def test_not_fitted(self):
        with pytest.raises(AppException) as exc:
            variable_importance(object())
        assert exc.value.code == ErrorCode.MODEL_NOT_FITTED

    def test_gains_add_up_to_ensemble_total(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((120, 4))
        y = x[:, 0] - 2.0 * x[:, 2] ** 2 + 0.1 * rng.standard_normal(120)
        ensemble = boost(x, y, np.ones(120), np.ones(120), stage1_loss("continuous"),
                         BoostParams(n_rounds=15, max_depth=3, subsample=0.8, seed=1))
        report = variable_importance(ensemble)
        total = sum(float(tree.split_gains().sum()) for tree in ensemble.trees)
        assert total > 0.0
        assert sum(report.raw_gain) == pytest.approx(total, rel=1e-12)
        per_feature = dict.fromkeys(ensemble.feature_names, 0.0)
        for tree in ensemble.trees:
            for feature, gain in zip(tree.split_features(), tree.split_gains()):
                per_feature[ensemble.feature_names[feature]] += float(gain)
        assert dict(zip(report.feature_names, report.raw_gain)) == pytest.approx(per_feature, rel=1e-12)


def test_tau_summary():
    summary = tau_summary(np.array([-1.0, 0.0, 1.0, 2.0]), threshold=0.5)
    assert summary["proportion_below_threshold"] == pytest.approx(0.5)
    assert summary["min"] == -1.0 and summary["max"] == 2.0
    assert summary["median"] == pytest.approx(0.5)
