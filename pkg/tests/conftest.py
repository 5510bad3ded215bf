from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.models.dataset import Dataset

FIXTURES = Path(__file__).resolve().parents[1] / "data" / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(20240401)


@pytest.fixture
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture
def linear_dataset(rng) -> Dataset:
    """Two responses linear in two covariates, small Gaussian noise, unscaled kernel axes."""
    n = 400
    X = rng.uniform(-1.0, 1.0, (n, 2))
    Y = np.column_stack([X.sum(axis=1), X[:, 0] - X[:, 1]]) + 0.1 * rng.standard_normal((n, 2))
    return Dataset.from_arrays(Y, X, standardize=False)


@pytest.fixture
def dated_dataset(rng) -> Dataset:
    """Bivariate returns against three covariates on business days."""
    n = 260
    times = pd.bdate_range("2023-01-02", periods=n)
    X = rng.standard_normal((n, 3))
    Y = 0.01 * np.column_stack([X.mean(axis=1), X[:, 0]]) + 0.01 * rng.standard_normal((n, 2))
    return Dataset.from_arrays(Y, X, times=times)
