#!/usr/bin/env python3
"""The whole pipeline through the command-line interface: prepare ->
train -> evaluate -> analyze, with manifests at every step.

Swap the synthetic corpus paths for the canonical benchmark files (the
10% training file and the corrected test file) to reproduce the published
numbers; see the README for expected runtimes at full scale.
"""

import tempfile
from pathlib import Path

from cavkdd.cli import main
from cavkdd.synthetic import write_corpus

workdir = Path(tempfile.mkdtemp(prefix="cavkdd-demo-"))
train_file, test_file = write_corpus(workdir, seed=99)
prep, run, rep, svd = (workdir / n for n in ("prep", "run", "rep", "svd"))

print("== prepare ==")
assert main(["prepare", "--train-in", str(train_file),
             "--test-in", str(test_file), "--out", str(prep)]) == 0

print("\n== train (cnn-lstm, 3 epochs for the demo) ==")
assert main(["train", "--data", str(prep), "--model", "cnn-lstm",
             "--epochs", "3", "--batch", "100", "--out", str(run)]) == 0

print("\n== evaluate (batch size 20, the published test protocol) ==")
assert main(["evaluate", "--model-file", str(run / "cnn_lstm.ckpt"),
             "--data", str(prep), "--batch", "20", "--report", str(rep)]) == 0

print("\n== analyze svd ==")
assert main(["analyze", "svd", "--data", str(prep), "--top-k", "10",
             "--out", str(svd)]) == 0

print("\n== artifacts ==")
for directory in (prep, run, rep, svd):
    for path in sorted(directory.iterdir()):
        print(f"  {path.relative_to(workdir)}")

print("\nmanifest of the training run:")
print((run / "manifest.txt").read_text())
