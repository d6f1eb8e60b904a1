import numpy as np
import pytest

from film.dataset import from_arrays


def make_dataset(n_pos: int, n_neg: int, n_features: int = 2, seed: int = 0, shift: float = 1.0):
    """Labelled Gaussian blobs with positives first (row ids follow that order)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_pos + n_neg, n_features))
    X[:n_pos] += shift
    y = np.r_[np.ones(n_pos, dtype=np.int8), np.zeros(n_neg, dtype=np.int8)]
    return from_arrays(X, y)


@pytest.fixture
def blobs():
    return make_dataset(40, 160, n_features=3, seed=11, shift=2.0)


def write_text(path, text: str):
    path.write_text(text, encoding="utf-8")
    return path


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
