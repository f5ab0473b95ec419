"""
Toy classifier over R x R pixel grids, the image analog of the text model
Flatten -> tanh hidden layer (the encoder embedding) -> shared output stage
"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from src.attacks.quantization import MAX_PIXEL, is_quantized
from src.classifier_model import TrainingHyperparams
from src.errors import DataError, DimensionMismatchError
from src.logger import get_logger
from src.output_stage import OutputHead
from src.settings import HeadType

logger = get_logger(__name__)


@dataclass
class GridTrainingResult:
    model: "GridModel"
    epoch_losses: List[float] = field(default_factory=list)


class GridModel:
    """
    Classifier over quantized (levels = q) or continuous (levels = None) grids.

    A quantized model only accepts grids whose values are all in Z_q.
    """

    def __init__(self, grid_size: int, weight: np.ndarray, bias: np.ndarray, head: OutputHead,
                 levels: Optional[int] = 4, seed: int = 0):
        self.grid_size = grid_size
        self.weight = np.asarray(weight, dtype=np.float64)   # (h, R*R)
        self.bias = np.asarray(bias, dtype=np.float64)       # (h,)
        self.head = head
        self.levels = levels
        self.seed = seed
        if self.weight.shape[1] != grid_size * grid_size:
            raise DimensionMismatchError("hidden weight columns must equal R*R")

    @classmethod
    def initialize(cls, grid_size: int, hidden_dim: int, num_classes: int, levels: Optional[int],
                   dropout: float, seed: int) -> "GridModel":
        rng = np.random.default_rng(seed)
        inputs = grid_size * grid_size
        weight = rng.normal(0.0, 1.0 / np.sqrt(inputs), size=(hidden_dim, inputs))
        head = OutputHead.initialize(rng, hidden_dim, HeadType.CLASSIFICATION, num_classes, dropout)
        return cls(grid_size, weight, np.zeros(hidden_dim), head, levels, seed)

    @property
    def model_id(self) -> str:
        return f"grid-q{self.levels}" if self.levels else "grid-continuous"

    @property
    def embedding_dim(self) -> int:
        return int(self.weight.shape[0])

    @property
    def num_classes(self) -> int:
        return self.head.num_classes

    @property
    def is_classifier(self) -> bool:
        return True

    def copy(self) -> "GridModel":
        return GridModel(self.grid_size, self.weight.copy(), self.bias.copy(), self.head.copy(),
                         self.levels, self.seed)

    def all_params(self):
        return {"grid_weight": self.weight, "grid_bias": self.bias,
                "head_weight": self.head.weight, "head_bias": self.head.bias}

    def check_grids(self, grids: np.ndarray) -> np.ndarray:
        grids = np.asarray(grids, dtype=np.float64)
        if grids.shape[-2:] != (self.grid_size, self.grid_size):
            raise DimensionMismatchError(f"expected {self.grid_size}x{self.grid_size} grids, got {grids.shape}")
        if np.any(grids < 0) or np.any(grids > MAX_PIXEL):
            raise DataError("grid values must lie in 0..255")
        if self.levels is not None and not is_quantized(grids, self.levels):
            raise DataError(f"grid holds values outside the permitted {self.levels}-level set")
        return grids

    def _flatten(self, grids: np.ndarray) -> np.ndarray:
        # Centered on mid-gray
        return grids.reshape(grids.shape[0], -1) / MAX_PIXEL - 0.5

    def encode_batch(self, grids) -> np.ndarray:
        grids = self.check_grids(grids)
        return np.tanh(self._flatten(grids) @ self.weight.T + self.bias)

    def encode(self, grid) -> np.ndarray:
        return self.encode_batch(np.asarray(grid)[None])[0]

    def classify(self, e: np.ndarray) -> np.ndarray:
        return self.head.forward(np.asarray(e, dtype=np.float64)[None]).outputs[0]

    def classify_batch(self, e: np.ndarray) -> np.ndarray:
        return self.head.forward(np.asarray(e, dtype=np.float64)).outputs

    def predict_outputs(self, grids) -> np.ndarray:
        return self.classify_batch(self.encode_batch(grids))

    def predict(self, grids) -> np.ndarray:
        return np.argmax(self.predict_outputs(grids), axis=1)

    def _loss_and_grads(self, grids: np.ndarray, labels: np.ndarray, dropout_mask: Optional[np.ndarray] = None):
        x = self._flatten(grids)
        hidden = np.tanh(x @ self.weight.T + self.bias)
        cache = self.head.forward(hidden, dropout_mask)
        loss, dlogits = self.head.loss_and_output_grad(cache, labels)
        grads, d_hidden = self.head.backward(cache, dlogits)
        d_pre = d_hidden * (1.0 - hidden ** 2)
        grads["grid_weight"] = d_pre.T @ x
        grads["grid_bias"] = d_pre.sum(axis=0)
        d_input = (d_pre @ self.weight) / MAX_PIXEL
        return loss, grads, d_input.reshape(grids.shape)

    def loss_grad_wrt_input(self, grid, label: int) -> np.ndarray:
        """Gradient of the cross-entropy w.r.t. raw pixel values, shape (R, R)"""
        grid = np.asarray(grid, dtype=np.float64)
        if grid.shape != (self.grid_size, self.grid_size):
            raise DimensionMismatchError(f"expected a {self.grid_size}x{self.grid_size} grid")
        _, _, d_input = self._loss_and_grads(grid[None], np.array([label]))
        return d_input[0]

    def mc_samples(self, grid, count: int, seed: Optional[int] = None) -> np.ndarray:
        return self.head.mc_samples(self.encode(grid), count, self.seed if seed is None else seed)


def train_grid_model(model: GridModel, grids, labels, hyper: TrainingHyperparams) -> GridTrainingResult:
    """Minibatch SGD on a private copy; deterministic given hyper.seed"""
    grids = model.check_grids(grids)
    labels = np.asarray(labels, dtype=np.int64)
    if len(grids) == 0:
        raise DataError("cannot train on an empty grid set")
    trained = model.copy()
    rng = np.random.default_rng(hyper.seed)
    losses: List[float] = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(grids))
        total = 0.0
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            dropout_mask = trained.head.draw_dropout(rng, (len(idx), trained.embedding_dim))
            loss, grads, _ = trained._loss_and_grads(grids[idx], labels[idx], dropout_mask)
            trained.weight -= hyper.learning_rate * grads["grid_weight"]
            trained.bias -= hyper.learning_rate * grads["grid_bias"]
            trained.head.weight -= hyper.learning_rate * grads["head_weight"]
            trained.head.bias -= hyper.learning_rate * grads["head_bias"]
            total += loss * len(idx)
        losses.append(total / len(order))
        logger.info(f"grid epoch {epoch + 1}/{hyper.epochs}: loss {losses[-1]:.5f}")
    return GridTrainingResult(model=trained, epoch_losses=losses)
