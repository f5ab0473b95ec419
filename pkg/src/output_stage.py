"""
Output stage shared by the text and grid classifiers
Dropout -> linear layer -> softmax (classification) or scalar score (regression)
"""
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from src.errors import DataError, DimensionMismatchError, UnsupportedOperationError
from src.numerics import softmax
from src.settings import HeadType


@dataclass
class HeadCache:
    """Intermediate values kept for the backward pass"""
    dropped: np.ndarray          # embeddings after dropout (n, d)
    dropout_mask: np.ndarray     # scaled keep mask (n, d), all ones when inactive
    outputs: np.ndarray          # probabilities (n, K) or scores (n,)


class OutputHead:
    """Linear output stage with optional dropout in front of it"""

    def __init__(self, weight: np.ndarray, bias: np.ndarray, head_type: HeadType, dropout: float = 0.0):
        self.weight = np.asarray(weight, dtype=np.float64)   # (K, d) or (1, d)
        self.bias = np.asarray(bias, dtype=np.float64)       # (K,) or (1,)
        self.head_type = head_type
        self.dropout = float(dropout)

    @classmethod
    def initialize(cls, rng: np.random.Generator, dim: int, head_type: HeadType,
                   num_classes: int, dropout: float) -> "OutputHead":
        outputs = num_classes if head_type == HeadType.CLASSIFICATION else 1
        weight = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(outputs, dim))
        return cls(weight, np.zeros(outputs), head_type, dropout)

    @property
    def input_dim(self) -> int:
        return int(self.weight.shape[1])

    @property
    def num_classes(self) -> int:
        return int(self.weight.shape[0]) if self.is_classifier else 0

    @property
    def is_classifier(self) -> bool:
        return self.head_type == HeadType.CLASSIFICATION

    def copy(self) -> "OutputHead":
        return OutputHead(self.weight.copy(), self.bias.copy(), self.head_type, self.dropout)

    def draw_dropout(self, rng: np.random.Generator, shape: Tuple[int, int]) -> np.ndarray:
        """Inverted-dropout keep mask, already scaled by 1/(1-p)"""
        if self.dropout <= 0.0:
            return np.ones(shape)
        keep = rng.random(shape) >= self.dropout
        return keep / (1.0 - self.dropout)

    def check_dim(self, e: np.ndarray):
        if e.shape[-1] != self.input_dim:
            raise DimensionMismatchError(
                f"sentence embedding has dimension {e.shape[-1]}, output stage expects {self.input_dim}")

    def forward(self, e: np.ndarray, dropout_mask: Optional[np.ndarray] = None) -> HeadCache:
        """Batch forward for embeddings of shape (n, d)"""
        self.check_dim(e)
        mask = np.ones_like(e) if dropout_mask is None else dropout_mask
        dropped = e * mask
        logits = dropped @ self.weight.T + self.bias
        if self.is_classifier:
            outputs = softmax(logits, axis=1)
        else:
            outputs = logits[:, 0]
        return HeadCache(dropped=dropped, dropout_mask=mask, outputs=outputs)

    def loss_and_output_grad(self, cache: HeadCache, labels: np.ndarray) -> Tuple[float, np.ndarray]:
        """
        Mean training loss over the batch and its gradient w.r.t. the logits.

        Cross-entropy for classification, squared error for regression.
        """
        n = cache.outputs.shape[0]
        if self.is_classifier:
            labels = np.asarray(labels, dtype=np.int64)
            if np.any(labels < 0) or np.any(labels >= self.num_classes):
                raise DataError(f"class label outside 0..{self.num_classes - 1}")
            picked = cache.outputs[np.arange(n), labels]
            loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
            dlogits = cache.outputs.copy()
            dlogits[np.arange(n), labels] -= 1.0
            return loss, dlogits / n
        targets = np.asarray(labels, dtype=np.float64)
        if not np.all(np.isfinite(targets)):
            raise DataError("regression target must be finite")
        diff = cache.outputs - targets
        loss = float(np.mean(diff ** 2))
        return loss, (2.0 * diff / n)[:, None]

    def backward(self, cache: HeadCache, dlogits: np.ndarray) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
        """Parameter gradients and the gradient w.r.t. the (pre-dropout) embeddings"""
        grads = {
            "head_weight": dlogits.T @ cache.dropped,
            "head_bias": dlogits.sum(axis=0),
        }
        d_embedding = (dlogits @ self.weight) * cache.dropout_mask
        return grads, d_embedding

    def mc_samples(self, e: np.ndarray, count: int, seed: int) -> np.ndarray:
        """count stochastic forward passes with dropout active, for one embedding (d,)"""
        if not self.is_classifier:
            raise UnsupportedOperationError("MC-dropout sampling needs a classification head")
        if count < 1:
            raise DataError("MC sample count must be >= 1")
        self.check_dim(e)
        rng = np.random.default_rng(seed)
        tiled = np.tile(np.asarray(e, dtype=np.float64)[None, :], (count, 1))
        return self.forward(tiled, self.draw_dropout(rng, tiled.shape)).outputs
