"""Shared helpers for the test suite."""

import numpy as np
import pytest

from coinfect import dataset as ds
from coinfect import mlogit


def beta_matrix(entries=None, p=15):
    """A (3, p+1) coefficient array, zero except for the given entries.

    ``entries`` maps (k, j) -> value with k in {1,2,3} and j = 0 for the
    intercept, j >= 1 for covariate j-1.
    """
    B = np.zeros((3, p + 1))
    for (k, j), v in (entries or {}).items():
        B[k - 1, j] = v
    return B


def labels_with_counts(counts, seed=0):
    """A label vector with exact per-class counts, shuffled deterministically."""
    y = np.repeat(np.arange(4), counts)
    rng = np.random.default_rng(seed)
    rng.shuffle(y)
    return y


def dataset_from_labels(y, X=None, seed=0):
    """Build a 15-covariate Dataset whose statuses are consistent with y."""
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    if X is None:
        rng = np.random.default_rng(seed)
        X = np.column_stack([
            38.0 + 2.0 * rng.random(n),          # temperature
            15.0 * rng.random(n),                # sick_days
            1.0 + 60.0 * rng.random(n),          # age
            400.0 * rng.random(n),               # rainfall
        ] + [(rng.random(n) < 0.5).astype(float) for _ in range(11)])
    malaria = np.isin(y, (2, 3)).astype(np.int64)
    arbo = np.isin(y, (1, 3)).astype(np.int64)
    return ds.Dataset(X, malaria, arbo, arbo.astype(float), y, ds.Mode.IGM)


def csv_text(rows, header=ds.CSV_COLUMNS):
    """CSV text from a header tuple and iterable of row iterables."""
    lines = [",".join(header)]
    lines += [",".join(str(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


FULL_ROW = [38.5, 4, 25, 120.0] + [1, 0, 1, 0, 0, 1, 0, 0, 1, 0, 1]


def full_row(malaria=0, igm=0, igg=0):
    return FULL_ROW + [malaria, igm, igg]


@pytest.fixture(scope="session")
def quadrant_fit():
    """A converged reference fit on moderately sized synthetic data (p=3)."""
    rng = np.random.default_rng(7)
    n = 4000
    X = rng.random((n, 3))
    B = np.array([
        [0.2, 1.0, -0.5, 0.0],
        [-0.1, 0.0, 0.8, 0.3],
        [0.0, -0.6, 0.0, 1.1],
    ])
    P = mlogit.predict_proba(B, X)
    y = (rng.random((n, 1)) > np.cumsum(P, axis=1)).sum(axis=1)
    return mlogit.fit(X, y, names=("a", "b", "c")), B, X, y
