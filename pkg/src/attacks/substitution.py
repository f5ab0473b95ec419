"""
N-word synonym substitution attack
Greedy, saliency-ordered; each position is visited at most once
"""
from typing import Optional

import numpy as np

from src.attacks.attack_types import AdversarialExample, AttackConfig, AttackKind, DetectorGate, SynonymLexicon
from src.attacks.saliency import saliency_rank
from src.classifier_model import ClassifierModel
from src.errors import ConfigError
from src.logger import get_logger
from src.text_data_model import TokenSequence

logger = get_logger(__name__)


def pwws_substitute(model: ClassifierModel, x: TokenSequence, cfg: AttackConfig, lexicon: SynonymLexicon,
                    label: Optional[int] = None, gate: Optional[DetectorGate] = None) -> AdversarialExample:
    """
    Substitute at most cfg.budget words with lexicon candidates.

    At each position (in saliency order) the candidate with the lowest resulting
    true-class probability is applied, provided it strictly lowers that probability.
    With a gate, candidates the detector flags are skipped in favour of the next best.
    `label` defaults to the model's prediction on x.
    """
    if cfg.kind != AttackKind.SUBSTITUTION:
        raise ConfigError(f"attack.kind: expected substitution, got {cfg.kind.value}")
    original_prediction = int(np.argmax(model.predict_outputs([x])[0]))
    label = original_prediction if label is None else int(label)
    current = x
    substitutions = 0
    if cfg.budget > 0 and len(lexicon) > 0:
        ranking = saliency_rank(model, x, label)
        current_prob = ranking.base_probability
        for position in ranking.order:
            if substitutions >= cfg.budget:
                break
            candidates = lexicon.candidates(x[position])
            if not candidates:
                continue
            trials = [current.replace(position, c) for c in candidates]
            probs = model.predict_outputs(trials)[:, label]
            # Lowest probability first; equal probabilities keep the lower token id
            ranked = sorted(range(len(trials)), key=lambda k: (probs[k], candidates[k]))
            ranked = [k for k in ranked if probs[k] < current_prob]
            if gate is not None and ranked:
                allowed = gate.accepts_batch([trials[k] for k in ranked])
                ranked = [k for k, ok in zip(ranked, allowed) if ok]
            if not ranked:
                continue
            best = ranked[0]
            current = trials[best]
            current_prob = float(probs[best])
            substitutions += 1
            logger.debug(f"position {position}: {x[position]} -> {candidates[best]} (p={current_prob:.4f})")
    perturbed_prediction = int(np.argmax(model.predict_outputs([current])[0]))
    return AdversarialExample(
        original=x, perturbed=current, kind=AttackKind.SUBSTITUTION, budget=cfg.budget,
        realized=substitutions, success=perturbed_prediction != original_prediction, label=label,
    )
