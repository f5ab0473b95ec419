"""
Saliency ranking for word positions and grid pixels
Saliency = drop in true-class probability when the position is replaced by a neutral token
"""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from src.attacks.quantization import MAX_PIXEL, neutral_value
from src.classifier_model import ClassifierModel
from src.errors import DataError, UnsupportedOperationError
from src.grid_model import GridModel
from src.text_data_model import PAD_ID, UNK_ID, TokenSequence


@dataclass
class SaliencyRanking:
    order: List[int]            # positions, most salient first
    scores: np.ndarray          # saliency per position (flat index for grids)
    base_probability: float     # true-class probability of the unmasked input
    label: int


def _rank(scores: np.ndarray, candidates: List[int]) -> List[int]:
    # Stable sort keeps ties in ascending index order
    return sorted(candidates, key=lambda i: -scores[i])


def resolve_label(outputs: np.ndarray, label: Optional[int]) -> int:
    """True label if given, otherwise the model's own prediction"""
    if label is not None:
        return int(label)
    return int(np.argmax(outputs))


def saliency_rank(model: ClassifierModel, x: TokenSequence, label: Optional[int] = None) -> SaliencyRanking:
    """
    Rank word positions by the probability drop from an unknown-token replacement.

    Padding positions are never ranked. Ties go to the lower index.
    """
    if not model.is_classifier:
        raise UnsupportedOperationError("saliency ranking needs a classification head")
    if len(x) == 0:
        raise DataError("cannot rank positions of an empty sequence")
    base = model.predict_outputs([x])[0]
    label = resolve_label(base, label)
    positions = [i for i, token in enumerate(x) if token != PAD_ID]
    masked = [x.replace(i, UNK_ID) for i in positions]
    scores = np.full(len(x), -np.inf)
    if masked:
        scores[positions] = base[label] - model.predict_outputs(masked)[:, label]
    return SaliencyRanking(_rank(scores, positions), scores, float(base[label]), label)


def grid_saliency_rank(model: GridModel, grid: np.ndarray, label: Optional[int] = None) -> SaliencyRanking:
    """Rank pixels (flat row-major index) by the drop from setting them to the mid-gray value"""
    grid = model.check_grids(np.asarray(grid)[None])[0]
    base = model.predict_outputs(grid[None])[0]
    label = resolve_label(base, label)
    neutral = neutral_value(model.levels) if model.levels is not None else MAX_PIXEL / 2.0
    flat = grid.reshape(-1)
    masked = np.repeat(flat[None], flat.size, axis=0)
    masked[np.arange(flat.size), np.arange(flat.size)] = neutral
    masked = masked.reshape(flat.size, *grid.shape)
    scores = base[label] - model.predict_outputs(masked)[:, label]
    return SaliencyRanking(_rank(scores, list(range(flat.size))), scores, float(base[label]), label)
