"""Fit-once feature pipeline: mean imputation, z-score standardization of
the 38 numeric columns, one-hot encoding of protocol_type / service / flag.

The fitted state is frozen. Vocabularies come from training data only, in
first-appearance order; means and standard deviations are population
statistics (divisor N) over the imputed training columns. Categories unseen
at fit time transform to an all-zero one-hot sub-block and bump a warning
counter instead of erroring — the canonical test split contains services
absent from training, by design. Missing values (NaNs in the numeric block;
only constructible programmatically, since the parser rejects unparseable
fields) are replaced by the stored column means.

One-hot columns pass through unstandardized by default; the
``standardize_onehot`` flag flips that single decision for comparison runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import json
import struct

import numpy as np

from .errors import DatasetFormatError, InputError
from .ingest import CATEGORICAL_COLUMNS, NUMERIC_COLUMNS, Dataset

ZERO_VARIANCE_EPS = 1e-12


@dataclass(frozen=True)
class PreprocessorState:
    """Frozen result of ``fit``: vocabularies, imputation values, scaling."""

    vocabs: dict
    impute_values: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    zero_variance: np.ndarray
    standardize_onehot: bool = False
    onehot_means: Optional[np.ndarray] = None
    onehot_stds: Optional[np.ndarray] = None

    @property
    def feature_length(self) -> int:
        return len(NUMERIC_COLUMNS) + sum(len(v) for v in self.vocabs.values())

    def vocab_offsets(self) -> dict[str, int]:
        """Start column of each one-hot block in the feature vector."""
        offsets = {}
        pos = len(NUMERIC_COLUMNS)
        for name in CATEGORICAL_COLUMNS:
            offsets[name] = pos
            pos += len(self.vocabs[name])
        return offsets


@dataclass
class FeatureMatrix:
    """Transformed records: (rows, F) values plus the aligned label vector."""

    values: np.ndarray
    labels: np.ndarray
    unknown_category_count: int = 0

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def _first_appearance_vocab(ds: Dataset, name: str) -> tuple:
    codes = ds.cat_codes[name]
    _, first = np.unique(codes, return_index=True)
    ordered_codes = codes[np.sort(first)]
    vocab = ds.cat_vocab[name]
    return tuple(vocab[c] for c in ordered_codes)


def _onehot_block(state: PreprocessorState, ds: Dataset, name: str,
                  out: np.ndarray, offset: int) -> int:
    """Scatter one-hot codes into ``out``; returns #unseen-category values."""
    lookup = {cat: i for i, cat in enumerate(state.vocabs[name])}
    ds_vocab = ds.cat_vocab[name]
    code_to_pos = np.array([lookup.get(cat, -1) for cat in ds_vocab],
                           dtype=np.int64)
    pos = code_to_pos[ds.cat_codes[name]] if len(ds_vocab) else \
        np.empty(0, dtype=np.int64)
    seen = pos >= 0
    rows = np.nonzero(seen)[0]
    out[rows, offset + pos[seen]] = 1.0
    return int((~seen).sum())


def fit(train: Dataset, standardize_onehot: bool = False) -> PreprocessorState:
    """Learn vocabularies and scaling from training data only."""
    if len(train) == 0:
        raise InputError("fit: empty training dataset")
    vocabs = {name: _first_appearance_vocab(train, name)
              for name in CATEGORICAL_COLUMNS}
    x = train.numeric
    missing = np.isnan(x)
    present = (~missing).sum(axis=0)
    sums = np.where(missing, 0.0, x).sum(axis=0)
    impute_values = np.where(present > 0, sums / np.maximum(present, 1), 0.0)
    imputed = np.where(missing, impute_values, x)
    means = imputed.mean(axis=0)
    stds = imputed.std(axis=0)  # population, divisor N
    zero_variance = stds < ZERO_VARIANCE_EPS

    onehot_means = onehot_stds = None
    if standardize_onehot:
        width = sum(len(v) for v in vocabs.values())
        block = np.zeros((len(train), width))
        state_tmp = PreprocessorState(vocabs, impute_values, means, stds,
                                      zero_variance)
        pos = 0
        for name in CATEGORICAL_COLUMNS:
            _onehot_block(state_tmp, train, name, block, pos)
            pos += len(vocabs[name])
        onehot_means = block.mean(axis=0)
        onehot_stds = block.std(axis=0)

    return PreprocessorState(vocabs=vocabs, impute_values=impute_values,
                             means=means, stds=stds,
                             zero_variance=zero_variance,
                             standardize_onehot=standardize_onehot,
                             onehot_means=onehot_means,
                             onehot_stds=onehot_stds)


def transform(state: PreprocessorState, ds: Dataset,
              dtype=np.float64) -> FeatureMatrix:
    """Records -> (rows, F) matrix: imputed + standardized numerics, then
    one-hot blocks; unseen categories become all-zero blocks."""
    n = len(ds)
    n_numeric = len(NUMERIC_COLUMNS)
    out = np.zeros((n, state.feature_length))
    x = ds.numeric
    x = np.where(np.isnan(x), state.impute_values, x)
    safe_stds = np.where(state.zero_variance, 1.0, state.stds)
    scale = np.where(state.zero_variance, 0.0, 1.0 / safe_stds)
    out[:, :n_numeric] = (x - state.means) * scale

    unknown = 0
    offset = n_numeric
    for name in CATEGORICAL_COLUMNS:
        unknown += _onehot_block(state, ds, name, out, offset)
        offset += len(state.vocabs[name])

    if state.standardize_onehot:
        stds = np.where(state.onehot_stds < ZERO_VARIANCE_EPS, 1.0,
                        state.onehot_stds)
        block = slice(n_numeric, state.feature_length)
        out[:, block] = (out[:, block] - state.onehot_means) / stds
        out[:, block][:, state.onehot_stds < ZERO_VARIANCE_EPS] = 0.0

    return FeatureMatrix(values=out.astype(dtype, copy=False),
                         labels=ds.labels.copy(),
                         unknown_category_count=unknown)


def feature_length(state: PreprocessorState) -> int:
    """Fixed feature-vector length F implied by a fitted state."""
    if state is None or not isinstance(state, PreprocessorState):
        raise InputError("feature_length: not a fitted preprocessor state")
    return state.feature_length


# --- checkpoint-section serialization ---------------------------------------

def state_to_bytes(state: PreprocessorState) -> bytes:
    meta = {
        "numeric_columns": list(NUMERIC_COLUMNS),
        "categorical_columns": list(CATEGORICAL_COLUMNS),
        "vocabs": {k: list(v) for k, v in state.vocabs.items()},
        "standardize_onehot": state.standardize_onehot,
        "has_onehot_stats": state.onehot_means is not None,
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = bytearray()
    payload += struct.pack("<I", len(blob))
    payload += blob
    for arr in (state.impute_values, state.means, state.stds):
        payload += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    payload += np.ascontiguousarray(state.zero_variance, dtype="u1").tobytes()
    if state.onehot_means is not None:
        for arr in (state.onehot_means, state.onehot_stds):
            payload += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    return bytes(payload)


def state_from_bytes(payload: bytes) -> PreprocessorState:
    if len(payload) < 4:
        raise DatasetFormatError("preprocessor section truncated")
    (blob_len,) = struct.unpack("<I", payload[:4])
    meta = json.loads(payload[4:4 + blob_len].decode("utf-8"))
    if tuple(meta["numeric_columns"]) != NUMERIC_COLUMNS or \
            tuple(meta["categorical_columns"]) != CATEGORICAL_COLUMNS:
        raise DatasetFormatError("preprocessor section: unexpected column roles")
    n = len(NUMERIC_COLUMNS)
    pos = 4 + blob_len
    expected = 3 * n * 8 + n
    if meta["has_onehot_stats"]:
        width = sum(len(v) for v in meta["vocabs"].values())
        expected += 2 * width * 8
    if len(payload) - pos != expected:
        raise DatasetFormatError("preprocessor section: bad payload length")

    def take_f8(count):
        nonlocal pos
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=pos).copy()
        pos += count * 8
        return arr

    impute_values = take_f8(n)
    means = take_f8(n)
    stds = take_f8(n)
    zero_variance = np.frombuffer(payload, dtype="u1", count=n, offset=pos).astype(bool)
    pos += n
    onehot_means = onehot_stds = None
    if meta["has_onehot_stats"]:
        width = sum(len(v) for v in meta["vocabs"].values())
        onehot_means = take_f8(width)
        onehot_stds = take_f8(width)
    vocabs = {k: tuple(v) for k, v in meta["vocabs"].items()}
    return PreprocessorState(vocabs=vocabs, impute_values=impute_values,
                             means=means, stds=stds, zero_variance=zero_variance,
                             standardize_onehot=bool(meta["standardize_onehot"]),
                             onehot_means=onehot_means, onehot_stds=onehot_stds)
