import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.core.error_handler import AppException, ErrorCode
from app.services.data_service import (
    CsvSchema,
    RandWeight,
    TrialDataset,
    case_control_weights,
    dataset_summary,
    load_covariates,
    load_csv,
    rand_weight,
)


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestRandWeight:
    @pytest.mark.parametrize("t, p, expected", [(1, 0.5, 2.0), (1, 0.25, 4.0), (-1, 0.25, 4.0 / 3.0)])
    def test_examples(self, t, p, expected):
        w = rand_weight(t, p)
        assert isinstance(w, RandWeight)
        assert float(w) == pytest.approx(expected)

    def test_vector(self):
        assert np.allclose(rand_weight(np.array([1, -1, 1]), 0.25), [4.0, 4.0 / 3.0, 4.0])

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_p_treat_out_of_range(self, p):
        with pytest.raises(AppException) as exc:
            rand_weight(1, p)
        assert exc.value.code == ErrorCode.VAL_OUT_OF_RANGE

    def test_invalid_treatment(self):
        with pytest.raises(AppException) as exc:
            rand_weight(0, 0.5)
        assert exc.value.code == ErrorCode.DATA_INVALID_TREATMENT

    @given(p=st.floats(min_value=0.01, max_value=0.99))
    @settings(max_examples=50)
    def test_weights_undo_assignment_probability(self, p):
        assert p * float(rand_weight(1, p)) == pytest.approx(1.0)
        assert (1.0 - p) * float(rand_weight(-1, p)) == pytest.approx(1.0)


class TestTrialDataset:
    def test_defaults(self):
        data = TrialDataset(y=[1.0, 2.0], t=[1, -1], x=[[0.0, 1.0], [1.0, 0.0]])
        assert data.n == 2 and data.p == 2
        assert data.feature_names == ["x1", "x2"]
        assert np.array_equal(data.w_sample, [1.0, 1.0])
        assert np.allclose(data.combined_weights, [2.0, 2.0])

    def test_arrays_read_only(self):
        data = TrialDataset(y=[1.0, 2.0], t=[1, -1], x=[[0.0], [1.0]])
        with pytest.raises(ValueError):
            data.y[0] = 5.0

    def test_binary_outcome_rejected(self):
        with pytest.raises(AppException) as exc:
            TrialDataset(y=[0.0, 2.0], t=[1, -1], x=[[0.0], [1.0]], outcome_kind="binary")
        assert exc.value.code == ErrorCode.DATA_INVALID_OUTCOME
        assert exc.value.context["row"] == 2

    def test_non_finite_covariate_counts_from_one(self):
        with pytest.raises(AppException) as exc:
            TrialDataset(y=[0.0, 1.0, 2.0], t=[1, -1, 1], x=[[0.0, 1.0], [1.0, 0.0], [2.0, np.nan]])
        assert exc.value.code == ErrorCode.DATA_NON_NUMERIC
        assert exc.value.context == {"row": 3, "column": 2}

    def test_nonpositive_weight(self):
        with pytest.raises(AppException) as exc:
            TrialDataset(y=[0.0, 1.0], t=[1, -1], x=[[0.0], [1.0]], w_sample=[1.0, 0.0])
        assert exc.value.code == ErrorCode.DATA_INVALID_WEIGHT

    def test_missing_covariate(self):
        with pytest.raises(AppException) as exc:
            TrialDataset(y=[0.0, 1.0], t=[1, -1], x=[[0.0], [np.nan]])
        assert exc.value.code == ErrorCode.DATA_NON_NUMERIC

    def test_empty(self):
        with pytest.raises(AppException) as exc:
            TrialDataset(y=[], t=[], x=np.zeros((0, 1)))
        assert exc.value.code == ErrorCode.DATA_EMPTY

    def test_subset_and_with_x(self):
        data = TrialDataset(y=[1.0, 2.0, 3.0], t=[1, -1, 1], x=[[0.0], [1.0], [2.0]], w_sample=[1.0, 2.0, 3.0])
        sub = data.subset([2, 0])
        assert np.array_equal(sub.y, [3.0, 1.0])
        assert np.array_equal(sub.w_sample, [3.0, 1.0])
        swapped = data.with_x(data.x[::-1])
        assert np.array_equal(swapped.y, data.y)
        assert np.array_equal(swapped.x[:, 0], [2.0, 1.0, 0.0])


class TestLoadCsv:
    def test_three_rows(self, tmp_path):
        path = write(tmp_path, "y,t,a,b\n0.5,1,1.0,2.0\n-1.5,-1,0.0,1.0\n2.0,1,3.0,0.5\n")
        data = load_csv(path, CsvSchema(outcome="y", treatment="t"))
        assert data.n == 3 and data.p == 2
        assert data.feature_names == ["a", "b"]

    def test_remap_zero_one(self, tmp_path):
        path = write(tmp_path, "y,t,a\n1.0,1,0.0\n2.0,0,1.0\n")
        data = load_csv(path, CsvSchema(outcome="y", treatment="t", remap_treatment=True))
        assert np.array_equal(data.t, [1.0, -1.0])

    def test_binary_outcome_names_row(self, tmp_path):
        path = write(tmp_path, "y,t,a\n1,1,0.0\n2,-1,1.0\n")
        with pytest.raises(AppException) as exc:
            load_csv(path, CsvSchema(outcome="y", treatment="t", outcome_kind="binary"))
        assert exc.value.code == ErrorCode.DATA_INVALID_OUTCOME
        assert exc.value.context["row"] == 2
        assert "Zeile 2" in exc.value.error.message

    def test_missing_column(self, tmp_path):
        path = write(tmp_path, "y,t,a\n1,1,0.0\n")
        with pytest.raises(AppException) as exc:
            load_csv(path, CsvSchema(outcome="y", treatment="t", covariates=["a", "b"]))
        assert exc.value.code == ErrorCode.DATA_MISSING_COLUMN
        assert exc.value.context["column"] == "b"

    def test_non_numeric_cell(self, tmp_path):
        path = write(tmp_path, "y,t,a\n1,1,0.0\n1,-1,abc\n")
        with pytest.raises(AppException) as exc:
            load_csv(path, CsvSchema(outcome="y", treatment="t"))
        assert exc.value.code == ErrorCode.DATA_NON_NUMERIC
        assert exc.value.context == {"file": str(path), "row": 2, "column": "a"}

    def test_treatment_out_of_coding(self, tmp_path):
        path = write(tmp_path, "y,t,a\n1,1,0.0\n1,0,1.0\n")
        with pytest.raises(AppException) as exc:
            load_csv(path, CsvSchema(outcome="y", treatment="t"))
        assert exc.value.code == ErrorCode.DATA_INVALID_TREATMENT

    def test_file_missing(self, tmp_path):
        with pytest.raises(AppException) as exc:
            load_csv(tmp_path / "nope.csv", CsvSchema(outcome="y", treatment="t"))
        assert exc.value.code == ErrorCode.CONFIG_FILE_NOT_FOUND

    def test_weight_column(self, tmp_path):
        path = write(tmp_path, "y,t,w,a\n1,1,0.5,0.0\n0,-1,2.0,1.0\n")
        data = load_csv(path, CsvSchema(outcome="y", treatment="t", weight="w"))
        assert data.feature_names == ["a"]
        assert np.array_equal(data.w_sample, [0.5, 2.0])

    def test_excluded_columns(self, tmp_path):
        path = write(tmp_path, "y,t,a,true_tau\n1,1,0.0,0.3\n0,-1,1.0,0.4\n")
        data = load_csv(path, CsvSchema(outcome="y", treatment="t", exclude=["true_tau"]))
        assert data.feature_names == ["a"]

    def test_case_control_population(self, tmp_path):
        path = write(tmp_path, "y,t,a\n1,1,0.0\n0,-1,1.0\n0,1,2.0\n")
        data = load_csv(path, CsvSchema(outcome="y", treatment="t", outcome_kind="binary",
                                        case_control_population_controls=20.0))
        assert np.array_equal(data.w_sample, [1.0, 10.0, 10.0])

    def test_load_covariates_subset(self, tmp_path):
        path = write(tmp_path, "b,a,extra\n1,2,x\n3,4,y\n")
        x = load_covariates(path, ["a", "b"])
        assert np.array_equal(x, [[2.0, 1.0], [4.0, 3.0]])


def test_case_control_weights_rejects_small_population():
    with pytest.raises(AppException) as exc:
        case_control_weights(np.array([0.0, 0.0, 1.0]), controls_in_population=1.0)
    assert exc.value.code == ErrorCode.VAL_OUT_OF_RANGE


def test_dataset_summary():
    data = TrialDataset(y=[1.0, 0.0, 1.0], t=[1, -1, 1], x=[[0.0], [1.0], [2.0]], outcome_kind="binary")
    summary = dataset_summary(data)
    assert summary["n_treated"] == 2 and summary["n_control"] == 1
    assert summary["outcome_mean"] == pytest.approx(2.0 / 3.0)
