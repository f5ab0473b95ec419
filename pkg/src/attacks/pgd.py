"""
Projected gradient ascent attacks for continuous inputs
Input embeddings of the text model, and raw pixels of a continuous grid model
"""
from typing import Optional

import numpy as np

from src.attacks.attack_types import AdversarialExample, AttackConfig, AttackKind
from src.attacks.quantization import MAX_PIXEL
from src.classifier_model import ClassifierModel
from src.errors import ConfigError, DataError
from src.grid_model import GridModel
from src.logger import get_logger
from src.text_data_model import PAD_ID, TokenSequence

logger = get_logger(__name__)


def _project(delta: np.ndarray, epsilon: float) -> np.ndarray:
    return np.clip(delta, -epsilon, epsilon)


def _default_label(model, outputs: np.ndarray, label):
    if label is not None:
        return label
    if not model.is_classifier:
        raise DataError("regression PGD needs an explicit target")
    return int(np.argmax(outputs))


def pgd_embedding_attack(model: ClassifierModel, x: TokenSequence, cfg: AttackConfig,
                         label=None) -> AdversarialExample:
    """
    l-infinity PGD on the input embedding sequence.

    delta starts at zero; every step adds alpha times the loss gradient and clips
    each coordinate to [-epsilon, epsilon]. Padding rows are never perturbed.
    The perturbed input is the embedding sequence h + delta, shape (L, d_in).
    """
    if cfg.kind != AttackKind.PGD:
        raise ConfigError(f"attack.kind: expected pgd, got {cfg.kind.value}")
    h = model.embed(x)
    mask = np.asarray(x.ids) != PAD_ID
    before = model.outputs_from_embeddings(h[None], mask[None])[0]
    label = _default_label(model, before, label)

    delta = np.zeros_like(h)
    for _ in range(cfg.steps):
        grad = model.loss_grad_for_embeddings(h + delta, mask, label)
        delta = _project(delta + cfg.alpha * grad, cfg.epsilon)
        delta[~mask] = 0.0

    perturbed = h + delta
    after = model.outputs_from_embeddings(perturbed[None], mask[None])[0]
    if model.is_classifier:
        success = int(np.argmax(after)) != int(np.argmax(before))
    else:
        success = abs(float(after) - label) > abs(float(before) - label)
    realized = float(np.max(np.abs(delta))) if delta.size else 0.0
    return AdversarialExample(
        original=x, perturbed=perturbed, kind=AttackKind.PGD, budget=cfg.epsilon,
        realized=realized, success=success, label=label,
    )


def pgd_grid_attack(model: GridModel, grid: np.ndarray, cfg: AttackConfig,
                    label: Optional[int] = None) -> AdversarialExample:
    """l-infinity PGD on raw pixels of a continuous grid model; pixels stay within 0..255"""
    if cfg.kind != AttackKind.GRID_PGD:
        raise ConfigError(f"attack.kind: expected grid_pgd, got {cfg.kind.value}")
    if model.levels is not None:
        raise ConfigError("grid PGD needs a continuous (unquantized) grid model")
    grid = model.check_grids(np.asarray(grid, dtype=np.float64)[None])[0]
    before = model.predict_outputs(grid[None])[0]
    label = _default_label(model, before, label)

    delta = np.zeros_like(grid)
    for _ in range(cfg.steps):
        grad = model.loss_grad_wrt_input(grid + delta, label)
        delta = _project(delta + cfg.alpha * grad, cfg.epsilon)
        delta = np.clip(grid + delta, 0.0, MAX_PIXEL) - grid

    perturbed = grid + delta
    after = model.predict_outputs(perturbed[None])[0]
    return AdversarialExample(
        original=grid, perturbed=perturbed, kind=AttackKind.GRID_PGD, budget=cfg.epsilon,
        realized=float(np.max(np.abs(delta))), success=int(np.argmax(after)) != int(np.argmax(before)),
        label=label,
    )
