"""
Attack-impact and detection-quality metrics
Precision-recall sweeps, best-F1 thresholds, fooling rate, score shift and perturbation norms
"""
import csv
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from src.errors import DataError, DimensionMismatchError, UnsupportedOperationError
from src.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        denominator = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denominator if denominator else 0.0


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts


@dataclass
class DetectionReport:
    """PR curve and best-F1 operating point for one detector"""
    detector_id: str
    curve: List[CurvePoint] = field(default_factory=list)
    best_f1: float = 0.0
    best_threshold: float = 0.0
    num_original: int = 0
    num_adversarial: int = 0

    def summary(self) -> Dict:
        return {
            "detector": self.detector_id,
            "best_f1": round(self.best_f1, 10),
            "best_threshold": _finite_or_string(self.best_threshold),
            "num_original": self.num_original,
            "num_adversarial": self.num_adversarial,
        }

    def write_curve_csv(self, path: str):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["threshold", "precision", "recall", "f1", "tp", "fp", "fn", "tn"])
            for p in self.curve:
                writer.writerow([_finite_or_string(p.threshold), f"{p.precision:.10f}", f"{p.recall:.10f}",
                                 f"{p.f1:.10f}", p.counts.tp, p.counts.fp, p.counts.fn, p.counts.tn])

    def write_summary_json(self, path: str):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.summary(), f, indent=2, sort_keys=True)
            f.write("\n")


def _finite_or_string(value: float):
    return float(value) if np.isfinite(value) else ("inf" if value > 0 else "-inf")


def candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    """-inf, midpoints between consecutive sorted unique scores, +inf"""
    unique = np.unique(scores)
    midpoints = (unique[:-1] + unique[1:]) / 2.0
    return np.concatenate([[-np.inf], midpoints, [np.inf]])


def confusion_at(scores: np.ndarray, is_adversarial: np.ndarray, threshold: float) -> ConfusionCounts:
    """Predict adversarial when score > threshold"""
    flagged = scores > threshold
    return ConfusionCounts(
        tp=int(np.sum(flagged & is_adversarial)),
        fp=int(np.sum(flagged & ~is_adversarial)),
        fn=int(np.sum(~flagged & is_adversarial)),
        tn=int(np.sum(~flagged & ~is_adversarial)),
    )


def evaluate_detection(scores: Sequence, labels: Sequence, detector_id: str = "") -> DetectionReport:
    """
    Sweep every candidate threshold and keep the best F1.

    labels: 0/False = original, 1/True = adversarial. Thresholds are visited in
    ascending order and only a strictly better F1 replaces the best, so ties go
    to the lowest threshold.
    """
    s = np.array([float(v) for v in scores], dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if len(s) != len(y):
        raise DimensionMismatchError("scores and labels must align")
    if len(s) == 0 or y.all() or not y.any():
        raise DataError("detection evaluation needs both original and adversarial samples")
    if not np.all(np.isfinite(s)):
        raise DataError("detection scores must be finite")

    report = DetectionReport(detector_id, num_original=int(np.sum(~y)), num_adversarial=int(np.sum(y)))
    best = -1.0
    for threshold in candidate_thresholds(s):
        counts = confusion_at(s, y, threshold)
        point = CurvePoint(float(threshold), counts.precision, counts.recall, counts.f1, counts)
        report.curve.append(point)
        if point.f1 > best:
            best = point.f1
            report.best_f1 = point.f1
            report.best_threshold = float(threshold)
    return report


def best_f1(scores: Sequence, labels: Sequence) -> float:
    return evaluate_detection(scores, labels).best_f1


def fooling_rate(labels: Sequence[int], original_predictions: Sequence[int],
                 adversarial_predictions: Sequence[int]) -> float:
    """Fraction of originally-correct samples whose adversarial counterpart is misclassified"""
    y = np.asarray(labels)
    before = np.asarray(original_predictions)
    after = np.asarray(adversarial_predictions)
    if not (len(y) == len(before) == len(after)):
        raise DimensionMismatchError("labels and prediction pairs must align")
    correct = before == y
    if not correct.any():
        raise DataError("fooling rate is undefined without originally-correct samples")
    return float(np.mean(after[correct] != y[correct]))


def model_fooling_rate(model, labels: Sequence[int], originals: Sequence, adversarials: Sequence) -> float:
    """fooling_rate with predictions taken from a text model"""
    if not model.is_classifier:
        raise UnsupportedOperationError("fooling rate needs a classification head")
    return fooling_rate(labels, model.predict(list(originals)), model.predict(list(adversarials)))


def mean_score_shift(model, originals: Sequence, adversarials: Sequence) -> float:
    """Mean of score(adv) - score(orig) for a regression head"""
    if model.is_classifier:
        raise UnsupportedOperationError("score shift needs a regression head")
    if len(originals) != len(adversarials):
        raise DimensionMismatchError("original and adversarial sets must align")
    if len(originals) == 0:
        raise DataError("score shift of an empty set is undefined")
    return float(np.mean(model.predict_outputs(list(adversarials)) - model.predict_outputs(list(originals))))


@dataclass(frozen=True)
class NormSummary:
    l2_mean: float
    l2_std: float
    linf_mean: float
    linf_std: float

    def to_dict(self) -> Dict[str, float]:
        return {k: round(v, 10) for k, v in asdict(self).items()}


def perturbation_norms(originals: Sequence[np.ndarray], perturbed: Sequence[np.ndarray]) -> NormSummary:
    """Per-sample l2 and l-infinity norms of the flattened embedding difference; mean and std"""
    if len(originals) != len(perturbed):
        raise DimensionMismatchError("original and perturbed sets must align")
    if len(originals) == 0:
        raise DataError("perturbation norms of an empty set are undefined")
    l2, linf = [], []
    for a, b in zip(originals, perturbed):
        a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
        if a.shape != b.shape:
            raise DimensionMismatchError(f"sequence length mismatch: {a.shape} vs {b.shape}")
        diff = (b - a).reshape(-1)
        l2.append(float(np.linalg.norm(diff)))
        linf.append(float(np.max(np.abs(diff))) if diff.size else 0.0)
    return NormSummary(float(np.mean(l2)), float(np.std(l2)), float(np.mean(linf)), float(np.std(linf)))
