"""
Mahalanobis detector
Distance to the closest class-conditional Gaussian with a shared (pooled) covariance
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.checkpoint import Checkpoint, read_checkpoint, write_checkpoint
from src.detectors.detector_score import AnyModel, DetectorScore, check_embedding_dim, embed_inputs
from src.errors import CheckpointError, DataError, NumericError
from src.logger import get_logger

logger = get_logger(__name__)

DETECTOR_ID = "mahalanobis"
DEFAULT_RIDGE = 1e-6


@dataclass
class MahalanobisModel:
    classes: np.ndarray       # (K,) class labels in mean order
    means: np.ndarray         # (K, d)
    covariance: np.ndarray    # pooled, before the ridge term
    precision: np.ndarray     # inverse of covariance + ridge * I
    ridge: float = DEFAULT_RIDGE

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    def distances(self, embeddings: np.ndarray) -> np.ndarray:
        """Minimum Mahalanobis distance over classes, shape (n,)"""
        e = check_embedding_dim(np.atleast_2d(embeddings), self.dim, DETECTOR_ID)
        diffs = e[:, None, :] - self.means[None, :, :]
        squared = np.einsum("nkd,de,nke->nk", diffs, self.precision, diffs)
        return np.sqrt(np.maximum(squared, 0.0)).min(axis=1)


def pooled_covariance(embeddings: np.ndarray, labels: np.ndarray, classes: np.ndarray, means: np.ndarray) -> np.ndarray:
    centered = embeddings - means[np.searchsorted(classes, labels)]
    return centered.T @ centered / len(embeddings)


def fit_mahalanobis(embeddings: np.ndarray, labels: Sequence[int], ridge: float = DEFAULT_RIDGE) -> MahalanobisModel:
    """Class means and pooled covariance (divisor n) of clean, class-labelled embeddings"""
    e = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    if e.ndim != 2 or len(e) != len(y):
        raise DataError("Mahalanobis fit needs an (n, d) matrix aligned with class labels")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) == 0 or np.any(counts < 2):
        raise DataError("Mahalanobis fit needs at least 2 samples per class")
    means = np.stack([e[y == k].mean(axis=0) for k in classes])
    cov = pooled_covariance(e, y, classes, means)
    cov = (cov + cov.T) / 2.0
    try:
        precision = np.linalg.inv(cov + ridge * np.eye(e.shape[1]))
    except np.linalg.LinAlgError as err:
        raise NumericError(f"pooled covariance is singular even with ridge {ridge} ({err})")
    precision = (precision + precision.T) / 2.0
    logger.debug(f"Mahalanobis fit: {len(classes)} classes, dim {e.shape[1]}")
    return MahalanobisModel(classes, means, cov, precision, ridge)


def mahalanobis_score(m: MahalanobisModel, e: np.ndarray) -> DetectorScore:
    return DetectorScore(float(m.distances(np.asarray(e, dtype=np.float64)[None])[0]), DETECTOR_ID)


class MahalanobisScorer:
    def __init__(self, m: MahalanobisModel, model: AnyModel):
        self.m = m
        self.model = model

    def __call__(self, inputs: Sequence) -> np.ndarray:
        return self.m.distances(embed_inputs(self.model, inputs))


def save_mahalanobis(m: MahalanobisModel, path: str):
    tensors = {"classes": m.classes.astype(np.float64), "means": m.means,
               "covariance": m.covariance, "precision": m.precision}
    write_checkpoint(path, Checkpoint(kind=f"detector:{DETECTOR_ID}", tensors=tensors, meta={"ridge": m.ridge}))


def load_mahalanobis(path: str) -> MahalanobisModel:
    ckpt = read_checkpoint(path)
    if ckpt.kind != f"detector:{DETECTOR_ID}":
        raise CheckpointError(f"{path}: '{ckpt.kind}' is not a Mahalanobis checkpoint")
    t = ckpt.tensors
    return MahalanobisModel(t["classes"].astype(np.int64), t["means"], t["covariance"], t["precision"],
                            float(ckpt.meta["ridge"]))
