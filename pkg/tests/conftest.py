import os

import numpy as np
import pytest
from hypothesis import settings

from gdfc.data import Dataset, prepare_datasets

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    """Benchmark CSVs materialised once per session (or $GDFC_DATA_DIR if set)."""
    if os.environ.get("GDFC_DATA_DIR"):
        return os.environ["GDFC_DATA_DIR"]
    d = tmp_path_factory.mktemp("datasets")
    prepare_datasets(d)
    return str(d)


def blobs(n_per=20, centers=((0.2, 0.2), (0.8, 0.8)), spread=0.05, seed=0) -> Dataset:
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(c, spread, (n_per, len(c))) for c in centers])
    y = np.repeat(np.arange(len(centers)), n_per)
    return Dataset(X, y)


@pytest.fixture
def toy_blobs():
    return blobs()


@pytest.fixture
def three_blobs():
    return blobs(n_per=30, centers=((0.1, 0.1, 0.5), (0.9, 0.2, 0.5), (0.5, 0.9, 0.1)), spread=0.06, seed=3)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[str, str] = {}


def record_criterion(key: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[key] = f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
