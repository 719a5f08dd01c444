"""Shared fixtures: a synthetic KDD-format corpus (session scoped) and
discovery of the canonical benchmark files for the data-dependent
acceptance criteria.

The canonical files are looked up in $CAVKDD_DATA_DIR, or ./data under the
repo root: the 10% training file (kddcup.data_10_percent[.gz], the
"_corrected" spelling also accepted) and the corrected test file
(corrected[.gz]). Tests that need them skip with an explicit reason when
they are absent.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from cavkdd import ingest, preprocess
from cavkdd.synthetic import write_corpus

REPO_ROOT = Path(__file__).resolve().parent.parent

CANONICAL_TRAIN_NAMES = ("kddcup.data_10_percent", "kddcup.data_10_percent.gz",
                         "kddcup.data_10_percent_corrected",
                         "kddcup.data_10_percent_corrected.gz")
CANONICAL_TEST_NAMES = ("corrected", "corrected.gz")


def _find_first(directory: Path, names) -> Path | None:
    for name in names:
        candidate = directory / name
        if candidate.is_file():
            return candidate
    return None


def canonical_paths():
    """(train, test) paths of the real benchmark, or None if unavailable."""
    root = os.environ.get("CAVKDD_DATA_DIR")
    directory = Path(root) if root else REPO_ROOT / "data"
    if not directory.is_dir():
        return None
    train = _find_first(directory, CANONICAL_TRAIN_NAMES)
    test = _find_first(directory, CANONICAL_TEST_NAMES)
    if train is None or test is None:
        return None
    return train, test


def require_canonical():
    paths = canonical_paths()
    if paths is None:
        pytest.skip("canonical KDD Cup 1999 files not present (set "
                    "CAVKDD_DATA_DIR or place them under ./data)")
    return paths


@pytest.fixture(scope="session")
def synthetic_corpus(tmp_path_factory):
    """(train_path, test_path) of a small seeded synthetic KDD corpus."""
    root = tmp_path_factory.mktemp("corpus")
    return write_corpus(root, seed=20240811)


@pytest.fixture(scope="session")
def synthetic_datasets(synthetic_corpus):
    train_path, test_path = synthetic_corpus
    train = ingest.load_kdd_dataset(train_path, split="train")
    test = ingest.load_kdd_dataset(test_path, split="test")
    return train, test


@pytest.fixture(scope="session")
def fitted_state(synthetic_datasets):
    train, _ = synthetic_datasets
    return preprocess.fit(train)


@pytest.fixture(scope="session")
def feature_matrices(synthetic_datasets, fitted_state):
    train, test = synthetic_datasets
    return (preprocess.transform(fitted_state, train, dtype=np.float32),
            preprocess.transform(fitted_state, test, dtype=np.float32))
