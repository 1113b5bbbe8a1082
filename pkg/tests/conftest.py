import os

# vor dem ersten Import von app: keine Log-Dateien aus der Testsuite
os.environ["TSGBT_LOG_DIR"] = "off"

import numpy as np
import pytest

from app.services.data_service import TrialDataset
from app.services.tree_service import BoostParams


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="Monte-Carlo-Tests ausführen")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="nur mit --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def two_cell_dataset(treated, control, n_per_arm=100, outcome_kind="continuous", extra_x=False,
                     n_control=None, p_treat=0.5):
    """
    Zwei-Zellen-Datensatz ohne Rauschen, standardmäßig balanciert.
    n_control weicht die Kontrollgröße je Zelle ab (z.B. 3·n_per_arm bei p_treat=0.25).

    treated/control: je Zelle (x1=0, x1=1) entweder der konstante Outcome (stetig)
    oder die Ereignisrate (binär, Armgröße·Rate Ereignisse).
    """
    ys, ts, xs = [], [], []
    sizes = {1.0: n_per_arm, -1.0: n_control or n_per_arm}
    for cell in (0, 1):
        for t, levels in ((1.0, treated), (-1.0, control)):
            level, size = levels[cell], sizes[t]
            if outcome_kind == "binary":
                events = int(round(level * size))
                y = np.r_[np.ones(events), np.zeros(size - events)]
            else:
                y = np.full(size, float(level))
            ys.append(y)
            ts.append(np.full(size, t))
            xs.append(np.full(size, float(cell)))
    x = np.concatenate(xs).reshape(-1, 1)
    if extra_x:
        x = np.column_stack([x, np.zeros(x.shape[0])])
    return TrialDataset(y=np.concatenate(ys), t=np.concatenate(ts), x=x, p_treat=p_treat,
                        outcome_kind=outcome_kind)


@pytest.fixture
def fast_params():
    return BoostParams.from_preset("test_fast")


@pytest.fixture
def continuous_two_cell():
    # Zellen x1=0/1: Haupteffekt (0.7, 0.3), wahre Differenz (1.0, -0.5)
    return two_cell_dataset(treated=(1.2, 0.05), control=(0.2, 0.55))


@pytest.fixture
def binary_two_cell():
    # Risikoverhältnis (2.0, 1.0), ½(μ₁+μ₋₁) = (0.3, 0.3)
    return two_cell_dataset(treated=(0.4, 0.3), control=(0.2, 0.3), outcome_kind="binary")
