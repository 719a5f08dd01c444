"""Confusion matrix and derived multiclass metrics, aggregate and per class.

The 3x3 confusion matrix stores cell[i][j] = samples of actual class j
predicted as class i (predicted rows x actual columns), in the fixed class
order normal, neptune, smurf. Precision/recall/F1 come in all three
averaging flavours (macro, weighted, micro) because published aggregate
rows rarely say which they used; micro precision = micro recall = accuracy
for single-label multiclass. One-vs-rest ROC AUC uses the rank-statistic
(Mann-Whitney) formulation with midranks, equivalent to trapezoidal
integration over all thresholds. Zero-denominator cells report 0.0 with an
explicit flag rather than erroring, so degenerate models still produce
reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CompatibilityError, InputError, ShapeError
from .ingest import CLASS_NAMES
from .layers import softmax
from .models import Model
from .tensor import Tensor

N_CLASSES = len(CLASS_NAMES)
AVERAGING_RULES = ("none", "macro", "weighted", "micro")


class ConfusionMatrix:
    """Integer counts, predicted rows x actual columns."""

    def __init__(self, counts: np.ndarray, class_names: tuple = CLASS_NAMES):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (len(class_names), len(class_names)):
            raise ShapeError(f"confusion matrix must be square over "
                             f"{len(class_names)} classes, got {counts.shape}")
        if (counts < 0).any():
            raise InputError("confusion matrix counts must be non-negative")
        self.counts = counts
        self.class_names = tuple(class_names)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        """Actual samples per class (column sums)."""
        return self.counts.sum(axis=0)

    @property
    def predicted_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def __eq__(self, other):
        return (isinstance(other, ConfusionMatrix)
                and np.array_equal(self.counts, other.counts)
                and self.class_names == other.class_names)


def confusion(y_true, y_pred) -> ConfusionMatrix:
    """Exact tabulation of aligned label index sequences."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"confusion: {len(y_true)} true labels vs "
                         f"{len(y_pred)} predictions")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(counts, (y_pred.astype(np.int64), y_true.astype(np.int64)), 1)
    return ConfusionMatrix(counts)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise InputError("accuracy: empty confusion matrix")
    return float(np.trace(cm.counts)) / cm.total


def _safe_divide(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, bool]:
    zero = den == 0
    out = np.divide(num, np.where(zero, 1, den), dtype=np.float64)
    out[zero] = 0.0
    return out, bool(zero.any())


@dataclass
class PrfReport:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    aggregate: Optional[tuple[float, float, float]] = None
    zero_division: bool = False


def precision_recall_f1(cm: ConfusionMatrix, averaging: str = "none") -> PrfReport:
    """Per-class precision/recall/F1 plus the requested aggregate.

    Per class i: precision = cm[i][i] / predicted-as-i total, recall =
    cm[i][i] / actual-i total; macro averages unweighted, weighted by
    support, micro from pooled counts.
    """
    if averaging not in AVERAGING_RULES:
        raise InputError(f"unknown averaging rule {averaging!r}; "
                         f"expected one of {AVERAGING_RULES}")
    diag = np.diag(cm.counts).astype(np.float64)
    precision, p_zero = _safe_divide(diag, cm.predicted_totals)
    recall, r_zero = _safe_divide(diag, cm.support)
    f1, f_zero = _safe_divide(2 * precision * recall, precision + recall)
    zero_division = p_zero or r_zero or f_zero
    report = PrfReport(precision=precision, recall=recall, f1=f1,
                       support=cm.support.copy(), zero_division=zero_division)
    if averaging == "none":
        return report
    if averaging == "macro":
        agg = (precision.mean(), recall.mean(), f1.mean())
    elif averaging == "weighted":
        total = cm.support.sum()
        if total == 0:
            agg = (0.0, 0.0, 0.0)
            report.zero_division = True
        else:
            w = cm.support / total
            agg = (float(precision @ w), float(recall @ w), float(f1 @ w))
    else:  # micro: pooled counts; equals accuracy for single-label multiclass
        pooled_tp = float(np.trace(cm.counts))
        total_pred = float(cm.counts.sum())
        micro = pooled_tp / total_pred if total_pred else 0.0
        agg = (micro, micro, micro)
    report.aggregate = tuple(float(a) for a in agg)
    return report


def _midranks(x: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing their average rank."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


@dataclass
class AucReport:
    per_class: np.ndarray          # NaN where undefined
    macro: float
    undefined_classes: list = field(default_factory=list)


def auc(y_true, scores) -> AucReport:
    """One-vs-rest ROC AUC per class from probability rows, plus the
    unweighted macro mean over the classes that are defined."""
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape != (len(y_true), N_CLASSES):
        raise ShapeError(f"auc: scores must be ({len(y_true)}, {N_CLASSES}), "
                         f"got {scores.shape}")
    per_class = np.full(N_CLASSES, np.nan)
    undefined = []
    for c in range(N_CLASSES):
        pos = y_true == c
        n_pos = int(pos.sum())
        n_neg = len(y_true) - n_pos
        if n_pos == 0 or n_neg == 0:
            undefined.append(CLASS_NAMES[c])
            continue
        ranks = _midranks(scores[:, c])
        rank_sum = ranks[pos].sum()
        per_class[c] = (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    defined = ~np.isnan(per_class)
    macro = float(per_class[defined].mean()) if defined.any() else float("nan")
    return AucReport(per_class=per_class, macro=macro,
                     undefined_classes=undefined)


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    accuracy: float
    per_class: PrfReport
    macro: tuple[float, float, float]
    weighted: tuple[float, float, float]
    micro: tuple[float, float, float]
    auc: AucReport
    class_names: tuple = CLASS_NAMES


def report_from_predictions(y_true, y_pred, scores) -> EvalReport:
    cm = confusion(y_true, y_pred)
    return EvalReport(
        confusion=cm,
        accuracy=accuracy(cm),
        per_class=precision_recall_f1(cm, "none"),
        macro=precision_recall_f1(cm, "macro").aggregate,
        weighted=precision_recall_f1(cm, "weighted").aggregate,
        micro=precision_recall_f1(cm, "micro").aggregate,
        auc=auc(y_true, scores),
    )


def evaluate(model: Model, features: np.ndarray, labels: np.ndarray,
             batch_size: int = 20) -> EvalReport:
    """Batched infer-mode pass -> full report.

    Argmax prediction with ties to the lowest class index; the report is
    independent of the batch size.
    """
    features = np.asarray(features)
    labels = np.asarray(labels)
    if features.ndim != 2 or len(features) != len(labels):
        raise ShapeError(f"evaluate: features {features.shape} and labels "
                         f"{labels.shape} misaligned")
    if features.shape[1] != model.descriptor.feature_length:
        raise CompatibilityError(
            f"feature length mismatch: model expects "
            f"{model.descriptor.feature_length}, data has {features.shape[1]}")
    if batch_size < 1:
        raise InputError("evaluate: batch size must be >= 1")
    probs = np.empty((len(labels), N_CLASSES), dtype=np.float64)
    for start in range(0, len(labels), batch_size):
        xb = features[start:start + batch_size]
        logits = model.forward(Tensor(xb), mode="infer")
        probs[start:start + len(xb)] = softmax(logits.data.astype(np.float64))
    preds = probs.argmax(axis=1)  # first occurrence = lowest class index
    return report_from_predictions(labels, preds, probs)


# --- serialization -----------------------------------------------------------

def report_text(report: EvalReport) -> str:
    """Structured text with stable key names and 6-decimal values."""
    lines = []
    names = report.class_names
    lines.append(f"samples: {report.confusion.total}")
    lines.append(f"accuracy: {report.accuracy:.6f}")
    for rule, agg in (("macro", report.macro), ("weighted", report.weighted),
                      ("micro", report.micro)):
        lines.append(f"{rule}_precision: {agg[0]:.6f}")
        lines.append(f"{rule}_recall: {agg[1]:.6f}")
        lines.append(f"{rule}_f1: {agg[2]:.6f}")
    auc_macro = report.auc.macro
    lines.append(f"macro_auc: {auc_macro:.6f}" if np.isfinite(auc_macro)
                 else "macro_auc: undefined")
    for i, name in enumerate(names):
        pc = report.per_class
        lines.append(f"class_{name}_precision: {pc.precision[i]:.6f}")
        lines.append(f"class_{name}_recall: {pc.recall[i]:.6f}")
        lines.append(f"class_{name}_f1: {pc.f1[i]:.6f}")
        auc_i = report.auc.per_class[i]
        lines.append(f"class_{name}_auc: {auc_i:.6f}" if np.isfinite(auc_i)
                     else f"class_{name}_auc: undefined")
        lines.append(f"class_{name}_support: {int(pc.support[i])}")
    if report.per_class.zero_division:
        lines.append("zero_division_cells: reported as 0.0")
    if report.auc.undefined_classes:
        lines.append("auc_undefined_classes: "
                     + ",".join(report.auc.undefined_classes))
    return "\n".join(lines) + "\n"


def confusion_csv(cm: ConfusionMatrix) -> str:
    """Predicted rows x actual columns, plus sum row and column."""
    names = cm.class_names
    header = ["predicted\\actual"] + list(names) + ["row_total"]
    lines = [",".join(header)]
    for i, name in enumerate(names):
        row = [name] + [str(int(v)) for v in cm.counts[i]] \
            + [str(int(cm.predicted_totals[i]))]
        lines.append(",".join(row))
    footer = ["col_total"] + [str(int(v)) for v in cm.support] + [str(cm.total)]
    lines.append(",".join(footer))
    return "\n".join(lines) + "\n"
