import json

import pytest

from app.config import DEFAULT_CONFIG, get_default_threads
from app.config.run_config import RunConfig, load_run_config, parse_run_config
from app.core.error_handler import AppException, ErrorCode
from app.workers.parallel_worker import resolve_n_jobs


def test_defaults():
    config = load_run_config(None)
    assert config == RunConfig()
    assert config.stage1.preset == "stage1_default"
    assert config.cv.n_folds == DEFAULT_CONFIG["cv"]["n_folds"]
    assert config.permutation.B == 200


def test_nested_sections():
    config = parse_run_config({
        "seed": 7,
        "data": {"path": "d.csv", "outcome_kind": "binary", "covariates": ["a", "b"]},
        "stage2": {"n_rounds": 40, "learning_rate": 1},
        "permutation": {"B": 10, "stat_kind": "mad"},
    })
    assert config.seed == 7
    assert config.data.covariates == ["a", "b"]
    assert config.stage2.preset == "stage2_default"
    assert config.stage2.overrides() == {"n_rounds": 40, "learning_rate": 1.0}
    assert isinstance(config.stage2.learning_rate, float)
    assert config.permutation.stat_kind == "mad"


def test_tune_grid_not_an_override():
    config = parse_run_config({"stage1": {"preset": "test_fast", "tune_grid": {"max_depth": [2, 4]}}})
    assert config.stage1.overrides() == {}
    assert config.stage1.tune_grid == {"max_depth": [2, 4]}


def test_simulation_overrides():
    config = parse_run_config({"simulation": {"setting": "P2", "n": 50, "rho": 0.2}})
    assert config.simulation.overrides() == {"rho": 0.2}


@pytest.mark.parametrize("raw, code", [
    ({"sed": 1}, ErrorCode.CONFIG_UNKNOWN_KEY),
    ({"cv": {"folds": 5}}, ErrorCode.CONFIG_UNKNOWN_KEY),
    ({"seed": "1"}, ErrorCode.CONFIG_INVALID_TYPE),
    ({"seed": True}, ErrorCode.CONFIG_INVALID_TYPE),
    ({"cv": {"enabled": 1}}, ErrorCode.CONFIG_INVALID_TYPE),
    ({"data": []}, ErrorCode.CONFIG_INVALID_TYPE),
    ({"benchmark": {"settings": [1, 2]}}, ErrorCode.CONFIG_INVALID_TYPE),
])
def test_rejected(raw, code):
    with pytest.raises(AppException) as exc:
        parse_run_config(raw)
    assert exc.value.code == code


def test_missing_file(tmp_path):
    with pytest.raises(AppException) as exc:
        load_run_config(tmp_path / "fehlt.json")
    assert exc.value.code == ErrorCode.CONFIG_FILE_NOT_FOUND


def test_invalid_json(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{\"seed\": 1,", encoding="utf-8")
    with pytest.raises(AppException) as exc:
        load_run_config(path)
    assert exc.value.code == ErrorCode.CONFIG_INVALID_JSON


def test_load_from_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"mode": "wgbt", "threads": 2}), encoding="utf-8")
    config = load_run_config(path)
    assert config.mode == "wgbt" and config.threads == 2


class TestThreads:
    def test_env(self, monkeypatch):
        monkeypatch.setenv("TSGBT_THREADS", "3")
        assert get_default_threads() == 3
        assert resolve_n_jobs(None) == 3
        assert resolve_n_jobs(2) == 2

    def test_invalid_env_falls_back(self, monkeypatch):
        monkeypatch.setenv("TSGBT_THREADS", "viele")
        assert get_default_threads() == DEFAULT_CONFIG["default_threads"]
