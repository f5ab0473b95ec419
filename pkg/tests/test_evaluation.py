import csv
import json

import numpy as np
import pytest

from src.errors import DataError, DimensionMismatchError, UnsupportedOperationError
from src.evaluation import (ConfusionCounts, evaluate_detection, fooling_rate, mean_score_shift, model_fooling_rate,
                            perturbation_norms)
from src.text_data_model import TokenSequence


def brute_force_best_f1(scores, labels):
    best = 0.0
    for threshold in [-np.inf] + sorted(set(scores)):
        flagged = [s > threshold for s in scores]
        tp = sum(1 for f, y in zip(flagged, labels) if f and y)
        fp = sum(1 for f, y in zip(flagged, labels) if f and not y)
        fn = sum(1 for f, y in zip(flagged, labels) if not f and y)
        if tp:
            best = max(best, 2 * tp / (2 * tp + fp + fn))
    return best


class TestDetectionSweep:
    def test_worked_example(self):
        report = evaluate_detection([0.9, 0.8, 0.4, 0.2], [1, 1, 0, 1], "toy")
        assert report.best_f1 == pytest.approx(6 / 7)
        assert report.best_threshold < 0.2

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(2, 200))
            scores = np.round(rng.normal(size=n), 1)
            labels = rng.integers(0, 2, size=n)
            labels[0], labels[1] = 0, 1
            report = evaluate_detection(scores, labels)
            assert abs(report.best_f1 - brute_force_best_f1(scores.tolist(), labels.tolist())) <= 1e-12

    def test_perfect_separation(self):
        assert evaluate_detection([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]).best_f1 == 1.0

    def test_recall_non_increasing_along_curve(self):
        rng = np.random.default_rng(1)
        report = evaluate_detection(rng.normal(size=50), np.arange(50) % 2)
        recalls = [p.recall for p in report.curve]
        assert all(b <= a for a, b in zip(recalls, recalls[1:]))
        assert report.curve[0].recall == 1.0 and report.curve[-1].recall == 0.0

    def test_single_label_rejected(self):
        with pytest.raises(DataError):
            evaluate_detection([0.1, 0.2], [1, 1])

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            evaluate_detection([0.1, float("inf")], [0, 1])

    def test_misaligned(self):
        with pytest.raises(DimensionMismatchError):
            evaluate_detection([0.1, 0.2, 0.3], [0, 1])

    def test_confusion_metrics(self):
        counts = ConfusionCounts(tp=3, fp=1, fn=0, tn=0)
        assert counts.precision == 0.75 and counts.recall == 1.0
        assert counts.f1 == pytest.approx(6 / 7)
        assert ConfusionCounts(0, 0, 2, 2).precision == 0.0

    def test_report_files(self, tmp_path):
        report = evaluate_detection([0.9, 0.8, 0.4, 0.2], [1, 1, 0, 1], "toy")
        report.write_curve_csv(str(tmp_path / "curve.csv"))
        report.write_summary_json(str(tmp_path / "summary.json"))
        with open(tmp_path / "curve.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0][:4] == ["threshold", "precision", "recall", "f1"]
        assert len(rows) == 1 + len(report.curve)
        with open(tmp_path / "summary.json") as f:
            summary = json.load(f)
        assert summary["best_threshold"] == "-inf"
        assert summary["num_adversarial"] == 3


class TestFoolingRate:
    def test_seven_of_ten(self):
        labels = [0, 1] * 5
        flipped = [1 - y if i < 7 else y for i, y in enumerate(labels)]
        assert fooling_rate(labels, labels, flipped) == pytest.approx(0.7)

    def test_identity_attack(self):
        assert fooling_rate([0, 1, 1], [0, 1, 0], [0, 1, 0]) == 0.0

    def test_only_originally_correct_count(self):
        assert fooling_rate([0, 1], [0, 0], [1, 1]) == 1.0

    def test_nothing_correct(self):
        with pytest.raises(DataError):
            fooling_rate([0, 1], [1, 0], [1, 0])

    def test_model_fooling_rate_needs_classifier(self, tiny_regression_model):
        x = [TokenSequence((2,))]
        with pytest.raises(UnsupportedOperationError):
            model_fooling_rate(tiny_regression_model, [0], x, x)


class TestScoreShift:
    def test_identity_is_zero(self, tiny_regression_model):
        x = [TokenSequence((2, 3)), TokenSequence((4,))]
        assert mean_score_shift(tiny_regression_model, x, x) == 0.0

    def test_direct_mean_difference(self, tiny_regression_model):
        originals = [TokenSequence((2, 3)), TokenSequence((4,))]
        adversarials = [TokenSequence((2, 3, 5)), TokenSequence((4, 6))]
        expected = np.mean([tiny_regression_model.forward(b) - tiny_regression_model.forward(a)
                            for a, b in zip(originals, adversarials)])
        assert abs(mean_score_shift(tiny_regression_model, originals, adversarials) - expected) <= 1e-10

    def test_needs_regression_head(self, tiny_model):
        with pytest.raises(UnsupportedOperationError):
            mean_score_shift(tiny_model, [TokenSequence((2,))], [TokenSequence((2,))])


class TestPerturbationNorms:
    def test_closed_form(self):
        summary = perturbation_norms([np.zeros(2)], [np.array([3.0, 4.0])])
        assert summary.l2_mean == 5.0 and summary.linf_mean == 4.0
        assert summary.l2_std == 0.0

    def test_identity(self):
        h = np.random.default_rng(0).normal(size=(3, 4))
        summary = perturbation_norms([h], [h.copy()])
        assert summary.l2_mean == 0.0 and summary.linf_mean == 0.0

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            perturbation_norms([np.zeros((2, 3))], [np.zeros((3, 3))])

    def test_empty(self):
        with pytest.raises(DataError):
            perturbation_norms([], [])
