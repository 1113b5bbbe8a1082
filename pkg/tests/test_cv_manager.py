import numpy as np
import pytest

from app.core.error_handler import AppException, ErrorCode
from app.managers.cv_manager import (
    NO_CV,
    CVSettings,
    cross_validate_rounds,
    fit_boosted,
    make_folds,
    sequential_tune,
    strata_for,
)
from app.services.data_service import TrialDataset
from app.services.loss_service import stage1_loss
from app.services.tree_service import BoostParams


@pytest.fixture
def noisy_data():
    rng = np.random.default_rng(42)
    x = rng.standard_normal((160, 4))
    t = np.where(np.arange(160) % 2 == 0, 1.0, -1.0)
    y = x[:, 0] + 0.5 * x[:, 1] ** 2 + rng.standard_normal(160)
    return TrialDataset(y=y, t=t, x=x)


class TestFolds:
    def test_partition_and_stratification(self, continuous_two_cell):
        strata = strata_for(continuous_two_cell)
        folds = make_folds(strata, 4, seed=0)
        assert len(folds) == 4
        held_out = np.sort(np.concatenate([test for _, test in folds]))
        assert np.array_equal(held_out, np.arange(continuous_two_cell.n))
        for _, test in folds:
            assert set(strata[test]) == {0, 2}

    def test_binary_strata_include_outcome(self, binary_two_cell):
        assert set(strata_for(binary_two_cell)) == {0, 1, 2, 3}

    def test_seeded(self):
        strata = np.repeat([0, 2], 20)
        a = make_folds(strata, 5, seed=3)
        b = make_folds(strata, 5, seed=3)
        assert all(np.array_equal(ta, tb) for (_, ta), (_, tb) in zip(a, b))

    def test_too_few_per_stratum(self):
        with pytest.raises(AppException) as exc:
            make_folds(np.repeat([0, 2], 3), 5, seed=0)
        assert exc.value.code == ErrorCode.VAL_OUT_OF_RANGE

    def test_invalid_settings(self):
        with pytest.raises(AppException):
            CVSettings(n_folds=1)
        with pytest.raises(AppException):
            CVSettings(patience=0)


class TestCrossValidateRounds:
    def test_flat_curve_stops_after_patience(self):
        data = TrialDataset(y=np.full(40, 2.0), t=np.tile([1.0, -1.0], 20),
                            x=np.random.default_rng(0).standard_normal((40, 2)))
        curve = cross_validate_rounds(data, stage1_loss("continuous"), BoostParams(n_rounds=50),
                                      CVSettings(n_folds=4, patience=5))
        assert curve.chosen_round == 0
        assert len(curve.losses) == 6
        assert curve.stopped_early

    def test_signal_selects_positive_round(self, continuous_two_cell, fast_params):
        curve = cross_validate_rounds(continuous_two_cell, stage1_loss("continuous"), fast_params,
                                      CVSettings(n_folds=4, patience=5))
        assert curve.chosen_round > 0
        assert curve.losses[curve.chosen_round] == min(curve.losses)
        assert curve.losses[curve.chosen_round] < curve.losses[0]
        assert list(curve.to_frame().columns) == ["round", "mean_heldout_loss"]

    def test_runs_until_budget(self, noisy_data):
        params = BoostParams(n_rounds=3, learning_rate=0.1, max_depth=2)
        curve = cross_validate_rounds(noisy_data, stage1_loss("continuous"), params, CVSettings(n_folds=3, patience=10))
        assert len(curve.losses) == 4
        assert not curve.stopped_early


class TestFitBoosted:
    def test_refit_uses_chosen_rounds(self, noisy_data):
        params = BoostParams(n_rounds=30, learning_rate=0.3, max_depth=2)
        ensemble, curve = fit_boosted(noisy_data, stage1_loss("continuous"), params, CVSettings(n_folds=3, patience=5))
        assert ensemble.n_rounds == curve.chosen_round
        assert curve.source == "cv"

    def test_without_cv(self, noisy_data):
        params = BoostParams(n_rounds=7, max_depth=2)
        ensemble, curve = fit_boosted(noisy_data, stage1_loss("continuous"), params, NO_CV)
        assert ensemble.n_rounds == 7
        assert curve.source == "train" and curve.chosen_round == 7

    def test_independent_of_thread_count(self, noisy_data):
        params = BoostParams(n_rounds=20, learning_rate=0.3, max_depth=3, subsample=0.7, colsample=0.5, seed=9)
        loss = stage1_loss("continuous")
        serial, c1 = fit_boosted(noisy_data, loss, params, CVSettings(n_folds=4, patience=5, n_jobs=1))
        threaded, c2 = fit_boosted(noisy_data, loss, params, CVSettings(n_folds=4, patience=5, n_jobs=2))
        assert serial.to_dict() == threaded.to_dict()
        assert c1.losses == c2.losses


class TestSequentialTune:
    def test_selects_one_value_per_parameter(self, noisy_data):
        params = BoostParams(n_rounds=15, learning_rate=0.3, max_depth=2)
        grid = {"max_depth": [1, 3], "min_child_weight": [1.0, 10.0]}
        tuned, table = sequential_tune(noisy_data, stage1_loss("continuous"), params, grid,
                                       cv=CVSettings(n_folds=3, patience=5))
        assert len(table) == 4
        assert table.groupby("parameter")["selected"].sum().to_dict() == {"max_depth": 1, "min_child_weight": 1}
        chosen = table[table["selected"]].set_index("parameter")["value"].to_dict()
        assert tuned.max_depth == chosen["max_depth"]
        assert tuned.min_child_weight == chosen["min_child_weight"]

    def test_unknown_parameter(self, noisy_data):
        with pytest.raises(AppException) as exc:
            sequential_tune(noisy_data, stage1_loss("continuous"), BoostParams(), {"n_rounds": [1, 2]})
        assert exc.value.code == ErrorCode.VAL_UNKNOWN_IDENTIFIER

    def test_empty_grid(self, noisy_data):
        with pytest.raises(AppException) as exc:
            sequential_tune(noisy_data, stage1_loss("continuous"), BoostParams(), {"max_depth": []})
        assert exc.value.code == ErrorCode.VAL_INVALID_INPUT
