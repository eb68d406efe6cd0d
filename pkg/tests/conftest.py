import os

import numpy as np
import pytest

# case-study fit (two-moment fit at the published summary statistics)
P_ABEL = 2.695844
P_ARCSINE = 2.598444
P_TAKACS = 3.821015
M_COUNT = 70.60
CLAIM_MEAN = 4.66
CLAIM_VAR = 265.34

DATA_ENV = "NEFRISK_DATA"


def dataset_path():
    return os.environ.get(DATA_ENV)


requires_data = pytest.mark.skipif(
    not (dataset_path() and os.path.exists(dataset_path())),
    reason=f"set {DATA_ENV} to the Swedish motor-insurance table to run data-dependent tests",
)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
