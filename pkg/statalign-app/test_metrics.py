import numpy as np
import pytest
from sklearn.metrics import f1_score

from core.exceptions import ConfigError, DimensionMismatchError, InsufficientDataError
from services.metrics import confusion, macro_f1, per_class_f1, scoring_labels


@pytest.mark.parametrize("seed", range(5))
def test_macro_f1_matches_definition(seed):
    rng = np.random.default_rng(seed)
    y_true = rng.integers(0, 4, size=200)
    y_pred = np.where(rng.random(200) < 0.7, y_true, rng.integers(0, 5, size=200))
    expected = f1_score(y_true, y_pred, labels=np.unique(y_true), average="macro", zero_division=0)
    assert abs(macro_f1(y_true, y_pred) - expected) <= 1e-12


def test_perfect_prediction():
    y = np.array([0, 1, 2, 3, 0, 1])
    assert macro_f1(y, y) == 1.0


def test_single_class_prediction_on_two_classes():
    y_true = np.array([0] * 50 + [3] * 50)
    y_pred = np.zeros(100, dtype=int)
    assert macro_f1(y_true, y_pred) == pytest.approx(1.0 / 3.0)


def test_predicted_only_classes_are_not_averaged():
    y_true = np.array([0, 0, 1, 1])
    y_pred = np.array([0, 2, 1, 1])
    scores = per_class_f1(y_true, y_pred)
    assert set(scores) == {0, 1}
    assert scores[0] == pytest.approx(2.0 / 3.0)
    assert scores[1] == pytest.approx(1.0)


def test_confusion_matrix():
    matrix = confusion([0, 0, 1, 3], [0, 1, 1, 0])
    assert matrix.classes.tolist() == [0, 1, 3]
    assert matrix.counts.tolist() == [[1, 1, 0], [0, 1, 0], [1, 0, 0]]
    assert matrix.total == 4
    assert matrix.to_dict()["classes"] == [0, 1, 3]


def test_metric_errors():
    with pytest.raises(DimensionMismatchError):
        macro_f1([0, 1], [0])
    with pytest.raises(InsufficientDataError):
        macro_f1([], [])


def test_macro_f1_ignores_class_names():
    rng = np.random.default_rng(11)
    y_true = rng.integers(0, 4, size=120)
    y_pred = np.where(rng.random(120) < 0.6, y_true, rng.integers(0, 4, size=120))
    renaming = np.array([7, 2, 9, 0])
    assert macro_f1(renaming[y_true], renaming[y_pred]) == pytest.approx(macro_f1(y_true, y_pred), abs=1e-12)


def test_all_normal_prediction_on_balanced_target():
    assert macro_f1([0, 0, 1, 1], [0, 0, 0, 0]) == pytest.approx(1.0 / 3.0)


def test_union_labels_penalise_predicted_only_classes():
    y_true = np.array([0, 0, 0, 3, 3])
    y_pred = np.array([0, 1, 2, 3, 3])
    assert scoring_labels(y_true, y_pred).tolist() == [0, 3]
    union = scoring_labels(y_true, y_pred, "union")
    assert union.tolist() == [0, 1, 2, 3]

    # F1: класс 0 = 0.5, класс 3 = 1, классы 1 и 2 = 0
    assert macro_f1(y_true, y_pred) == pytest.approx(0.75)
    assert macro_f1(y_true, y_pred, labels=union) == pytest.approx(1.5 / 4.0)
    assert macro_f1(y_true, y_pred, labels=union) < macro_f1(y_true, y_pred)


def test_explicit_labels_include_absent_classes():
    scores = per_class_f1([0, 0, 1], [0, 0, 1], labels=[0, 1, 4])
    assert scores == {0: 1.0, 1: 1.0, 4: 0.0}
    assert macro_f1([0, 0, 1], [0, 0, 1], labels=[0, 1, 4]) == pytest.approx(2.0 / 3.0)


def test_scoring_labels_rejects_unknown_mode():
    with pytest.raises(ConfigError):
        scoring_labels([0, 1], [0, 1], "weighted")


def test_precision_recall_agree_with_per_class_f1():
    rng = np.random.default_rng(12)
    y_true = rng.integers(0, 3, size=80)
    y_pred = np.where(rng.random(80) < 0.5, y_true, rng.integers(0, 3, size=80))
    matrix = confusion(y_true, y_pred)
    scores = per_class_f1(y_true, y_pred)
    for class_id, score in scores.items():
        precision, recall = matrix.precision_recall(class_id)
        harmonic = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        assert harmonic == pytest.approx(score, abs=1e-12)
