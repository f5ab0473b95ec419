"""
Residue detector
A logistic-regression classifier on encoder embeddings, P(adv | e) = sigmoid(W.e + b)
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from src.checkpoint import Checkpoint, read_checkpoint, write_checkpoint
from src.detectors.detector_score import (AnyModel, DetectorScore, binary_labels, check_embedding_dim,
                                          embed_inputs)
from src.errors import CheckpointError, NumericError
from src.logger import get_logger
from src.numerics import sigmoid

logger = get_logger(__name__)

DETECTOR_ID = "residue"
_LOG_FLOOR = 1e-12


@dataclass
class ResidueHyperparams:
    learning_rate: float = 0.2
    epochs: int = 1000
    batch_size: int = 200
    seed: int = 0
    standardize: bool = False


@dataclass
class ResidueDetector:
    weight: np.ndarray
    bias: float = 0.0
    # Set only when trained with standardization
    mean: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = float(self.bias)
        if not (np.all(np.isfinite(self.weight)) and np.isfinite(self.bias)):
            raise NumericError("residue detector parameters must be finite")

    @classmethod
    def zeros(cls, dim: int) -> "ResidueDetector":
        return cls(np.zeros(dim), 0.0)

    @property
    def dim(self) -> int:
        return int(self.weight.shape[0])

    def _prepare(self, embeddings: np.ndarray) -> np.ndarray:
        embeddings = check_embedding_dim(embeddings, self.dim, DETECTOR_ID)
        if self.mean is not None:
            embeddings = (embeddings - self.mean) / self.scale
        return embeddings

    def logits(self, embeddings: np.ndarray) -> np.ndarray:
        return self._prepare(np.atleast_2d(embeddings)) @ self.weight + self.bias

    def scores(self, embeddings: np.ndarray) -> np.ndarray:
        return sigmoid(self.logits(embeddings))


@dataclass
class ResidueTrainingResult:
    detector: ResidueDetector
    epoch_losses: List[float] = field(default_factory=list)


def binary_cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    p = np.clip(probs, _LOG_FLOOR, 1.0 - _LOG_FLOOR)
    return float(-np.mean(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p)))


def train_residue(embeddings: np.ndarray, labels: Sequence, hyper: Optional[ResidueHyperparams] = None) -> ResidueTrainingResult:
    """
    Fit the residue detector by minibatch gradient descent on binary cross-entropy.

    labels: 0 = original, 1 = adversarial. Parameters start at zero and the
    shuffle order comes from hyper.seed. epoch_losses holds the full-set loss
    after each epoch.
    """
    hyper = hyper or ResidueHyperparams()
    y = binary_labels(labels)
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or len(x) != len(y):
        raise NumericError("residue training needs an (n, d) embedding matrix aligned with labels")
    detector = ResidueDetector.zeros(x.shape[1])
    if hyper.standardize:
        detector.mean = x.mean(axis=0)
        detector.scale = np.where(x.std(axis=0) > 1e-12, x.std(axis=0), 1.0)
    x = detector._prepare(x)

    rng = np.random.default_rng(hyper.seed)
    losses: List[float] = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            residual = sigmoid(x[idx] @ detector.weight + detector.bias) - y[idx]
            detector.weight -= hyper.learning_rate * (x[idx].T @ residual) / len(idx)
            detector.bias -= hyper.learning_rate * float(residual.mean())
        losses.append(binary_cross_entropy(sigmoid(x @ detector.weight + detector.bias), y))
        logger.debug(f"residue epoch {epoch + 1}/{hyper.epochs}: bce {losses[-1]:.5f}")
    if not np.all(np.isfinite(detector.weight)):
        raise NumericError("residue detector training diverged")
    return ResidueTrainingResult(detector, losses)


def residue_score(detector: ResidueDetector, e: np.ndarray) -> DetectorScore:
    """sigmoid(W.e + b) for a single embedding"""
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 1:
        raise NumericError("residue_score takes a single embedding vector")
    return DetectorScore(float(detector.scores(e[None])[0]), DETECTOR_ID)


class ResidueScorer:
    """Scores raw inputs (token sequences or grids) through a model's encoder"""

    def __init__(self, detector: ResidueDetector, model: AnyModel):
        self.detector = detector
        self.model = model

    def __call__(self, inputs: Sequence) -> np.ndarray:
        return self.detector.scores(embed_inputs(self.model, inputs))


def save_residue_detector(detector: ResidueDetector, path: str):
    tensors = {"weight": detector.weight, "bias": np.array([detector.bias])}
    if detector.mean is not None:
        tensors["mean"] = detector.mean
        tensors["scale"] = detector.scale
    write_checkpoint(path, Checkpoint(kind=f"detector:{DETECTOR_ID}", tensors=tensors))


def load_residue_detector(path: str) -> ResidueDetector:
    ckpt = read_checkpoint(path)
    if ckpt.kind != f"detector:{DETECTOR_ID}":
        raise CheckpointError(f"{path}: '{ckpt.kind}' is not a residue detector checkpoint")
    t = ckpt.tensors
    return ResidueDetector(t["weight"], float(t["bias"][0]), t.get("mean"), t.get("scale"))
