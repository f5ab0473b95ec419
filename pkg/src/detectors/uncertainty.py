"""
MC-dropout uncertainty detectors
Six measures computed from M dropout-active probability vectors
"""
from enum import Enum
from typing import Dict, Sequence, Tuple

import numpy as np

from src.detectors.detector_score import AnyModel, DetectorScore, embed_inputs
from src.errors import ConfigError, DataError, UnsupportedOperationError
from src.evaluation import evaluate_detection
from src.logger import get_logger
from src.numerics import entropy
from src.output_stage import OutputHead

logger = get_logger(__name__)

DETECTOR_ID = "uncertainty"
_LOG_FLOOR = 1e-12


class UncertaintyMeasure(Enum):
    ENTROPY_OF_EXPECTED = "entropy_of_expected"
    EXPECTED_ENTROPY = "expected_entropy"
    MUTUAL_INFORMATION = "mutual_information"
    CONFIDENCE = "confidence"
    KL = "kl"
    REVERSE_MI = "reverse_mi"


def _log(p: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(p, _LOG_FLOOR))


def uncertainty_from_samples(samples: np.ndarray, measure: UncertaintyMeasure) -> float:
    """
    samples: (M, K) probability vectors from dropout-active passes.

    kl is the expected pairwise KL divergence between samples,
    reverse_mi is the mean KL(mean || sample).
    """
    p = np.asarray(samples, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 2:
        raise ConfigError("uncertainty measures need M >= 2 samples")
    mean = p.mean(axis=0)
    if measure == UncertaintyMeasure.ENTROPY_OF_EXPECTED:
        value = entropy(mean)
    elif measure == UncertaintyMeasure.EXPECTED_ENTROPY:
        value = entropy(p, axis=1).mean()
    elif measure == UncertaintyMeasure.MUTUAL_INFORMATION:
        value = entropy(mean) - entropy(p, axis=1).mean()
    elif measure == UncertaintyMeasure.CONFIDENCE:
        value = 1.0 - mean.max()
    elif measure == UncertaintyMeasure.KL:
        # E_{i,j} KL(p_i || p_j) = E_i sum p_i log p_i - E_{i,j} sum p_i log p_j
        log_p = _log(p)
        value = np.mean(np.sum(p * log_p, axis=1)) - np.sum(mean * log_p.mean(axis=0))
    elif measure == UncertaintyMeasure.REVERSE_MI:
        value = np.mean(np.sum(mean * (_log(mean) - _log(p)), axis=1))
    else:
        raise ConfigError(f"unknown uncertainty measure {measure}")
    return float(value)


def _check_model(model: AnyModel, count: int):
    if not model.is_classifier:
        raise UnsupportedOperationError("uncertainty detectors need a classification head")
    if count < 2:
        raise ConfigError("detectors.mc_samples: M must be >= 2")


def uncertainty_score(model: AnyModel, x, measure: UncertaintyMeasure, count: int = 16,
                      seed: int = 0) -> DetectorScore:
    _check_model(model, count)
    samples = model.mc_samples(x, count, seed)
    return DetectorScore(uncertainty_from_samples(samples, UncertaintyMeasure(measure)), DETECTOR_ID)


def uncertainty_table(model: AnyModel, inputs: Sequence, count: int = 16,
                      seed: int = 0) -> Dict[UncertaintyMeasure, np.ndarray]:
    """All six measures for every input; each input uses the same dropout seed"""
    _check_model(model, count)
    return embedding_uncertainty_table(model.head, embed_inputs(model, inputs), count, seed)


def embedding_uncertainty_table(head: OutputHead, embeddings: np.ndarray, count: int = 16,
                                seed: int = 0) -> Dict[UncertaintyMeasure, np.ndarray]:
    """Same table straight from encoder embeddings (used for continuous-attack outputs)"""
    if not head.is_classifier:
        raise UnsupportedOperationError("uncertainty detectors need a classification head")
    if count < 2:
        raise ConfigError("detectors.mc_samples: M must be >= 2")
    table = {m: np.zeros(len(embeddings)) for m in UncertaintyMeasure}
    for i, e in enumerate(embeddings):
        samples = head.mc_samples(e, count, seed)
        for m in UncertaintyMeasure:
            table[m][i] = uncertainty_from_samples(samples, m)
    return table


class UncertaintyScorer:
    def __init__(self, model: AnyModel, measure: UncertaintyMeasure, count: int = 16, seed: int = 0):
        self.model = model
        self.measure = UncertaintyMeasure(measure)
        self.count = count
        self.seed = seed

    def __call__(self, inputs: Sequence) -> np.ndarray:
        return uncertainty_table(self.model, inputs, self.count, self.seed)[self.measure]


def select_uncertainty_measure(head: OutputHead, clean_embeddings: np.ndarray, adversarial_embeddings: np.ndarray,
                               count: int = 16, seed: int = 0) -> Tuple[UncertaintyMeasure, float]:
    """Measure with the best validation F1 on encoder embeddings; ties keep the earlier measure"""
    if len(clean_embeddings) == 0 or len(adversarial_embeddings) == 0:
        raise DataError("measure selection needs original and adversarial validation samples")
    clean = embedding_uncertainty_table(head, clean_embeddings, count, seed)
    attacked = embedding_uncertainty_table(head, adversarial_embeddings, count, seed)
    labels = np.concatenate([np.zeros(len(clean_embeddings)), np.ones(len(adversarial_embeddings))])
    best, best_f1 = None, -1.0
    for m in UncertaintyMeasure:
        f1 = evaluate_detection(np.concatenate([clean[m], attacked[m]]), labels, detector_id=m.value).best_f1
        logger.debug(f"uncertainty measure {m.value}: validation F1 {f1:.4f}")
        if f1 > best_f1:
            best, best_f1 = m, f1
    logger.info(f"Selected uncertainty measure '{best.value}' (validation F1 {best_f1:.4f})")
    return best, best_f1
