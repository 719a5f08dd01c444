#!/usr/bin/env python3
"""Exercise the evaluation module on the published test-run confusion
counts: accuracy, per-class precision/recall/F1 under three averaging
rules, and the rank-statistic AUC.
"""

import numpy as np

from cavkdd import evaluation as ev
from cavkdd.ingest import CLASS_INDEX, CLASS_NAMES

NORMAL, NEPTUNE, SMURF = (CLASS_INDEX["normal"], CLASS_INDEX["neptune"],
                          CLASS_INDEX["smurf"])

# the published end-to-end test run, predicted rows x actual columns
counts = np.zeros((3, 3), dtype=np.int64)
counts[NEPTUNE, [NEPTUNE, NORMAL, SMURF]] = [57984, 23, 0]
counts[NORMAL, [NEPTUNE, NORMAL, SMURF]] = [17, 59927, 24]
counts[SMURF, [NEPTUNE, NORMAL, SMURF]] = [0, 640, 164067]
cm = ev.ConfusionMatrix(counts)

print(ev.confusion_csv(cm))
print(f"accuracy: {ev.accuracy(cm):.5f} "
      f"({np.trace(cm.counts)} / {cm.total})")

prf = ev.precision_recall_f1(cm, "none")
print("\nper class:")
for i, name in enumerate(CLASS_NAMES):
    print(f"  {name:<8} precision={prf.precision[i]:.5f} "
          f"recall={prf.recall[i]:.5f} f1={prf.f1[i]:.5f} "
          f"support={int(prf.support[i])}")

for rule in ("macro", "weighted", "micro"):
    p, r, f1 = ev.precision_recall_f1(cm, rule).aggregate
    print(f"{rule:>9}: precision={p:.5f} recall={r:.5f} f1={f1:.5f}")
print("(micro equals accuracy for single-label multiclass, as it must)")

# AUC from scores: a tiny hand-ranked example against threshold enumeration
rng = np.random.default_rng(4)
y = np.array([0, 0, 1, 1, 2, 2])
scores = np.eye(3)[y] * 0.6 + rng.random((6, 3)) * 0.4
report = ev.auc(y, scores)
print("\nAUC (one-vs-rest, rank statistic):",
      [f"{a:.3f}" for a in report.per_class], f"macro={report.macro:.3f}")
