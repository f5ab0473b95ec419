"""
Discrete grid attack for quantized image inputs
Saliency-ranked pixel substitution restricted to adjacent permitted levels
"""
from typing import Optional

import numpy as np

from src.attacks.attack_types import AdversarialExample, AttackConfig, AttackKind, DetectorGate
from src.attacks.quantization import adjacent_levels
from src.attacks.saliency import grid_saliency_rank
from src.errors import ConfigError
from src.grid_model import GridModel
from src.logger import get_logger

logger = get_logger(__name__)


def discrete_grid_attack(model: GridModel, grid: np.ndarray, cfg: AttackConfig, label: Optional[int] = None,
                         gate: Optional[DetectorGate] = None) -> AdversarialExample:
    """
    Change at most cfg.budget pixels, each to a neighbouring level of Z_q.

    Pixels are visited once, in saliency order. A pixel changes only when one of
    its neighbouring levels strictly lowers the true-class probability; the
    lowest-probability neighbour wins, with ties going to the lower value.
    """
    if cfg.kind != AttackKind.GRID:
        raise ConfigError(f"attack.kind: expected grid, got {cfg.kind.value}")
    if model.levels is None:
        raise ConfigError("discrete grid attack needs a quantized grid model")
    original = model.check_grids(np.asarray(grid)[None])[0]
    original_prediction = int(np.argmax(model.predict_outputs(original[None])[0]))
    label = original_prediction if label is None else int(label)
    current = original.copy()
    changed = 0

    if cfg.budget > 0:
        ranking = grid_saliency_rank(model, original, label)
        current_prob = ranking.base_probability
        for pixel in ranking.order:
            if changed >= cfg.budget:
                break
            row, col = divmod(pixel, model.grid_size)
            values = adjacent_levels(int(original[row, col]), model.levels)
            trials = np.repeat(current[None], len(values), axis=0)
            trials[np.arange(len(values)), row, col] = values
            probs = model.predict_outputs(trials)[:, label]
            ranked = sorted(range(len(values)), key=lambda k: (probs[k], values[k]))
            ranked = [k for k in ranked if probs[k] < current_prob]
            if gate is not None and ranked:
                allowed = gate.accepts_batch([trials[k] for k in ranked])
                ranked = [k for k, ok in zip(ranked, allowed) if ok]
            if not ranked:
                continue
            best = ranked[0]
            current = trials[best]
            current_prob = float(probs[best])
            changed += 1
            logger.debug(f"pixel ({row}, {col}): {int(original[row, col])} -> {values[best]}")

    perturbed_prediction = int(np.argmax(model.predict_outputs(current[None])[0]))
    return AdversarialExample(
        original=original, perturbed=current, kind=AttackKind.GRID, budget=cfg.budget,
        realized=int(np.count_nonzero(current != original)),
        success=perturbed_prediction != original_prediction, label=label,
    )
