#!/usr/bin/env python3
"""Walk through the data pipeline: raw KDD text -> filtered columnar
dataset -> standardized one-hot feature matrix.

Uses the bundled synthetic corpus generator so the demo runs without the
real benchmark; point TRAIN/TEST at the canonical files to reproduce the
published per-class counts instead.
"""

import tempfile
from pathlib import Path

import numpy as np

from cavkdd import class_distribution, load_kdd_dataset
from cavkdd.ingest import CATEGORICAL_COLUMNS, NUMERIC_COLUMNS, parse_kdd_file
from cavkdd.preprocess import fit, transform
from cavkdd.synthetic import write_corpus

workdir = Path(tempfile.mkdtemp(prefix="cavkdd-demo-"))
TRAIN, TEST = write_corpus(workdir, seed=7)
print(f"synthetic corpus under {workdir}")

records = parse_kdd_file(TRAIN)
print(f"\nparsed {len(records)} records; first record:")
first = records[0]
print(f"  protocol={first.protocol_type} service={first.service} "
      f"flag={first.flag} label={first.label}")
print(f"  round-trips byte-faithfully: {first.to_line().count(',') == 41}")

train = load_kdd_dataset(TRAIN, split="train")
test = load_kdd_dataset(TEST, split="test")
print(f"\nclass counts (train): {train.class_counts.tolist()}")
print(f"class counts (test):  {test.class_counts.tolist()}")
fractions = class_distribution(train)
print("train distribution: "
      + ", ".join(f"{k}={v:.1%}" for k, v in fractions.items()))

state = fit(train)
print(f"\nfitted preprocessor: F = {state.feature_length} "
      f"({len(NUMERIC_COLUMNS)} numeric + "
      + " + ".join(str(len(state.vocabs[c])) for c in CATEGORICAL_COLUMNS)
      + " one-hot)")

matrix = transform(state, train)
numeric = matrix.values[:, :len(NUMERIC_COLUMNS)][:, ~state.zero_variance]
print(f"numeric block after standardization: |mean| max = "
      f"{np.abs(numeric.mean(axis=0)).max():.2e}, "
      f"|std - 1| max = {np.abs(numeric.std(axis=0) - 1).max():.2e}")

test_matrix = transform(state, test)
print(f"test split transformed; unseen category values mapped to zero "
      f"blocks: {test_matrix.unknown_category_count}")
