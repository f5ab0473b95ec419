"""
Detector score type and shared input handling
Every detector score is oriented so that higher means more adversarial
"""
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from src.classifier_model import ClassifierModel
from src.errors import ContractViolationError, DataError, DimensionMismatchError
from src.grid_model import GridModel

AnyModel = Union[ClassifierModel, GridModel]


@dataclass(frozen=True)
class DetectorScore:
    score: float
    detector_id: str

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ContractViolationError(f"{self.detector_id} produced a non-finite score")

    def __float__(self) -> float:
        return float(self.score)


def score_values(scores: Sequence[Union[DetectorScore, float]]) -> np.ndarray:
    """Plain float array from DetectorScores or numbers"""
    return np.array([float(s) for s in scores], dtype=np.float64)


def embed_inputs(model: AnyModel, inputs: Sequence) -> np.ndarray:
    """Encoder embeddings (n, d) for token sequences (text model) or grids (grid model)"""
    if isinstance(model, GridModel):
        if len(inputs) == 0:
            return np.zeros((0, model.embedding_dim))
        return model.encode_batch(np.stack([np.asarray(g, dtype=np.float64) for g in inputs]))
    return model.sentence_embeddings(list(inputs))


def check_embedding_dim(embeddings: np.ndarray, dim: int, detector_id: str) -> np.ndarray:
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.shape[-1] != dim:
        raise DimensionMismatchError(f"{detector_id} expects {dim}-dim embeddings, got {embeddings.shape[-1]}")
    if not np.all(np.isfinite(embeddings)):
        raise DataError(f"{detector_id}: embeddings contain non-finite values")
    return embeddings


def binary_labels(labels: Sequence) -> np.ndarray:
    """0 = original, 1 = adversarial; both must be present"""
    y = np.asarray(labels)
    if y.dtype == bool:
        y = y.astype(np.int64)
    if y.size == 0 or not np.all(np.isin(y, (0, 1))):
        raise DataError("detector labels must be 0 (original) or 1 (adversarial)")
    if len(np.unique(y)) < 2:
        raise DataError("detector training needs both original and adversarial samples")
    return y.astype(np.float64)


def stack_pairs(originals: np.ndarray, adversarials: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Concatenate an original and an adversarial set with 0/1 labels"""
    data = np.concatenate([originals, adversarials], axis=0)
    labels = np.concatenate([np.zeros(len(originals)), np.ones(len(adversarials))])
    return data, labels
