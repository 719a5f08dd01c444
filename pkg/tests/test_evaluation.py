import numpy as np
import pytest

from cavkdd import evaluation as ev
from cavkdd import models
from cavkdd.errors import CompatibilityError, InputError, ShapeError
from cavkdd.ingest import CLASS_INDEX

NORMAL, NEPTUNE, SMURF = (CLASS_INDEX["normal"], CLASS_INDEX["neptune"],
                          CLASS_INDEX["smurf"])


def published_matrix() -> ev.ConfusionMatrix:
    """The published test-run confusion matrix (predicted x actual), mapped
    into this toolkit's class order (normal, neptune, smurf)."""
    counts = np.zeros((3, 3), dtype=np.int64)
    counts[NEPTUNE, NEPTUNE] = 57984
    counts[NEPTUNE, NORMAL] = 23
    counts[NEPTUNE, SMURF] = 0
    counts[NORMAL, NEPTUNE] = 17
    counts[NORMAL, NORMAL] = 59927
    counts[NORMAL, SMURF] = 24
    counts[SMURF, NEPTUNE] = 0
    counts[SMURF, NORMAL] = 640
    counts[SMURF, SMURF] = 164067
    return ev.ConfusionMatrix(counts)


def synthetic_stream_for(cm: ev.ConfusionMatrix):
    """A (y_true, y_pred) pair that reconstructs the matrix exactly."""
    y_true, y_pred = [], []
    for pred in range(3):
        for actual in range(3):
            n = int(cm.counts[pred, actual])
            y_true += [actual] * n
            y_pred += [pred] * n
    return np.asarray(y_true), np.asarray(y_pred)


def test_confusion_reconstructs_published_counts():
    cm = published_matrix()
    y_true, y_pred = synthetic_stream_for(cm)
    rebuilt = ev.confusion(y_true, y_pred)
    assert rebuilt == cm
    assert rebuilt.total == 282_682


def test_confusion_diagonal_when_perfect():
    y = np.array([0, 1, 2, 2, 1])
    cm = ev.confusion(y, y)
    assert np.array_equal(cm.counts, np.diag([1, 2, 2]))


def test_confusion_single_wrong_sample():
    cm = ev.confusion([SMURF], [NORMAL])
    assert cm.counts[NORMAL, SMURF] == 1
    assert np.trace(cm.counts) == 0


def test_confusion_length_mismatch():
    with pytest.raises(ShapeError):
        ev.confusion([0, 1], [0])


def test_accuracy_published_matrix():
    assert ev.accuracy(published_matrix()) == pytest.approx(
        281_978 / 282_682, abs=1e-12)
    assert ev.accuracy(published_matrix()) == pytest.approx(0.99751, abs=1e-5)


def test_accuracy_degenerate_matrices():
    assert ev.accuracy(ev.ConfusionMatrix(np.diag([5, 2, 3]))) == 1.0
    off = np.array([[0, 1, 0], [2, 0, 0], [0, 3, 0]])
    assert ev.accuracy(ev.ConfusionMatrix(off)) == 0.0
    with pytest.raises(InputError):
        ev.accuracy(ev.ConfusionMatrix(np.zeros((3, 3), dtype=int)))


def test_per_class_precision_published_matrix():
    prf = ev.precision_recall_f1(published_matrix(), "none")
    assert prf.precision[NEPTUNE] == pytest.approx(0.99960, abs=1e-5)
    assert prf.precision[NORMAL] == pytest.approx(0.99932, abs=1e-5)
    assert prf.precision[SMURF] == pytest.approx(0.99611, abs=1e-5)


def test_macro_aggregates_published_matrix():
    macro = ev.precision_recall_f1(published_matrix(), "macro").aggregate
    assert macro[0] == pytest.approx(0.99834, abs=1e-5)
    assert macro[1] == pytest.approx(0.99621, abs=1e-5)


def test_classwise_report_published_at_two_decimals():
    """Published per-class table: precision/recall/F1 at 2-decimal rounding
    with supports 164091 (smurf) / 60590 (normal) / 58001 (neptune)."""
    cm = published_matrix()
    prf = ev.precision_recall_f1(cm, "none")
    assert int(prf.support[SMURF]) == 164_091
    assert int(prf.support[NORMAL]) == 60_590
    assert int(prf.support[NEPTUNE]) == 58_001
    rounded = {
        "smurf": (round(prf.precision[SMURF], 2), round(prf.recall[SMURF], 2),
                  round(prf.f1[SMURF], 2)),
        "normal": (round(prf.precision[NORMAL], 2), round(prf.recall[NORMAL], 2),
                   round(prf.f1[NORMAL], 2)),
        "neptune": (round(prf.precision[NEPTUNE], 2), round(prf.recall[NEPTUNE], 2),
                    round(prf.f1[NEPTUNE], 2)),
    }
    assert rounded["smurf"] == (1.00, 1.00, 1.00)
    assert rounded["normal"] == (1.00, 0.99, 0.99)
    assert rounded["neptune"] == (1.00, 1.00, 1.00)


def test_perfect_matrix_all_metrics_one():
    cm = ev.ConfusionMatrix(np.diag([4, 5, 6]))
    for rule in ("macro", "weighted", "micro"):
        assert ev.precision_recall_f1(cm, rule).aggregate == (1.0, 1.0, 1.0)


def test_unknown_averaging_rule():
    with pytest.raises(InputError, match="averaging"):
        ev.precision_recall_f1(published_matrix(), "harmonic")


def test_micro_equals_accuracy_on_random_matrices():
    rng = np.random.default_rng(31)
    for _ in range(25):
        counts = rng.integers(0, 50, size=(3, 3))
        if counts.sum() == 0:
            continue
        cm = ev.ConfusionMatrix(counts)
        micro = ev.precision_recall_f1(cm, "micro").aggregate
        acc = ev.accuracy(cm)
        assert micro[0] == micro[1] == micro[2] == pytest.approx(acc)


def test_f1_between_min_max_of_precision_recall():
    rng = np.random.default_rng(32)
    for _ in range(25):
        cm = ev.ConfusionMatrix(rng.integers(0, 40, size=(3, 3)))
        prf = ev.precision_recall_f1(cm, "none")
        for p, r, f1 in zip(prf.precision, prf.recall, prf.f1):
            assert min(p, r) - 1e-12 <= f1 <= max(p, r) + 1e-12


def test_zero_denominator_reports_zero_with_flag():
    counts = np.zeros((3, 3), dtype=int)
    counts[0, 0] = 5  # class 1 and 2 never predicted nor present
    prf = ev.precision_recall_f1(ev.ConfusionMatrix(counts), "none")
    assert prf.precision[1] == 0.0 and prf.recall[2] == 0.0
    assert prf.zero_division


# --- AUC ---------------------------------------------------------------------

def brute_force_auc_ovr(y_true, scores, cls):
    """Trapezoidal integration of the ROC curve over every threshold."""
    pos = y_true == cls
    s = scores[:, cls]
    thresholds = np.concatenate([[np.inf], np.unique(s)[::-1], [-np.inf]])
    tpr, fpr = [], []
    n_pos, n_neg = pos.sum(), (~pos).sum()
    for t in thresholds:
        predicted_pos = s >= t
        tpr.append((predicted_pos & pos).sum() / n_pos)
        fpr.append((predicted_pos & ~pos).sum() / n_neg)
    return float(np.trapezoid(tpr, fpr))


def test_auc_perfectly_separating_scores():
    y = np.array([0, 0, 1, 1, 2, 2])
    scores = np.eye(3)[y] * 0.8 + 0.1
    report = ev.auc(y, scores)
    assert np.allclose(report.per_class, 1.0)
    assert report.macro == 1.0


def test_auc_label_independent_scores_half():
    y = np.array([0, 1, 2, 0, 1, 2])
    scores = np.full((6, 3), 1 / 3)
    report = ev.auc(y, scores)
    assert np.allclose(report.per_class, 0.5)


def test_auc_six_sample_hand_ranked_matches_brute_force():
    y = np.array([0, 0, 1, 1, 2, 2])
    rng = np.random.default_rng(33)
    scores = rng.random((6, 3))
    scores[1, 0] = scores[0, 0]  # inject a tie on the class-0 column
    report = ev.auc(y, scores)
    for cls in range(3):
        assert report.per_class[cls] == pytest.approx(
            brute_force_auc_ovr(y, scores, cls), abs=1e-12)


def test_auc_matches_brute_force_on_random_batches():
    rng = np.random.default_rng(34)
    for _ in range(10):
        y = rng.integers(0, 3, size=30)
        if len(np.unique(y)) < 3:
            continue
        scores = rng.random((30, 3))
        report = ev.auc(y, scores)
        for cls in range(3):
            assert report.per_class[cls] == pytest.approx(
                brute_force_auc_ovr(y, scores, cls), abs=1e-12)


def test_auc_absent_class_excluded_with_flag():
    y = np.array([0, 0, 1, 1])
    scores = np.random.default_rng(35).random((4, 3))
    report = ev.auc(y, scores)
    assert np.isnan(report.per_class[2])
    assert report.undefined_classes == ["smurf"]
    assert np.isfinite(report.macro)


def test_auc_invariant_under_monotone_transform():
    rng = np.random.default_rng(36)
    y = rng.integers(0, 3, size=40)
    scores = rng.random((40, 3))
    warped = np.exp(3.0 * scores)  # strictly monotone
    a = ev.auc(y, scores).per_class
    b = ev.auc(y, warped).per_class
    assert np.allclose(a[np.isfinite(a)], b[np.isfinite(b)])


# --- evaluate ----------------------------------------------------------------

def test_evaluate_batch_size_invariance(feature_matrices):
    _, test_matrix = feature_matrices
    f = test_matrix.values.shape[1]
    model = models.build_dnn(f, seed=41)
    small = ev.evaluate(model, test_matrix.values, test_matrix.labels,
                        batch_size=20)
    large = ev.evaluate(model, test_matrix.values, test_matrix.labels,
                        batch_size=1000)
    assert small.confusion == large.confusion
    assert ev.report_text(small) == ev.report_text(large)
    assert ev.confusion_csv(small.confusion) == ev.confusion_csv(large.confusion)


def test_evaluate_feature_mismatch():
    model = models.build_dnn(10, seed=1)
    with pytest.raises(CompatibilityError, match="mismatch"):
        ev.evaluate(model, np.zeros((4, 7), dtype=np.float32),
                    np.zeros(4, dtype=int))


def test_constant_predictor_accuracy_is_class_fraction():
    """A model predicting one constant class scores that class's fraction."""
    y_true = np.array([SMURF] * 58 + [NORMAL] * 22 + [NEPTUNE] * 20)
    y_pred = np.full_like(y_true, SMURF)
    cm = ev.confusion(y_true, y_pred)
    assert ev.accuracy(cm) == pytest.approx(0.58)


def test_report_text_structure(feature_matrices):
    _, test_matrix = feature_matrices
    f = test_matrix.values.shape[1]
    model = models.build_dnn(f, seed=42)
    report = ev.evaluate(model, test_matrix.values, test_matrix.labels)
    text = ev.report_text(report)
    for key in ("accuracy:", "macro_precision:", "weighted_recall:",
                "micro_f1:", "class_normal_precision:", "class_smurf_support:"):
        assert key in text
    # stable 6-decimal formatting
    assert f"accuracy: {report.accuracy:.6f}" in text


def test_confusion_csv_layout():
    cm = published_matrix()
    text = ev.confusion_csv(cm)
    lines = text.strip().splitlines()
    assert lines[0] == "predicted\\actual,normal,neptune,smurf,row_total"
    assert lines[-1].startswith("col_total,")
    assert lines[-1].endswith(str(cm.total))
    # row respects predicted x actual orientation
    normal_row = lines[1].split(",")
    assert normal_row[0] == "normal"
    assert int(normal_row[1]) == cm.counts[NORMAL, NORMAL]
    assert int(normal_row[2]) == cm.counts[NORMAL, NEPTUNE]
