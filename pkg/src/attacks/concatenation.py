"""
Universal concatenation attack
One suffix of N words, built greedily and appended to every input
"""
from typing import List, Optional

import numpy as np

from src.attacks.attack_types import AdversarialExample, AttackConfig, AttackKind, DetectorGate
from src.classifier_model import ClassifierModel
from src.errors import ConfigError, DataError
from src.logger import get_logger
from src.text_data_model import LabeledDataset, TokenSequence, Vocabulary

logger = get_logger(__name__)

_LOG_FLOOR = 1e-12


def sample_objectives(model: ClassifierModel, sequences: List[TokenSequence], labels: np.ndarray) -> np.ndarray:
    """Per-sample attack objective: true-class loss (classification) or raw score (regression)"""
    outputs = model.predict_outputs(sequences)
    if model.is_classifier:
        picked = outputs[np.arange(len(sequences)), labels.astype(np.int64)]
        return -np.log(np.maximum(picked, _LOG_FLOOR))
    return outputs


def _suffixed_objectives(model: ClassifierModel, sequences: List[TokenSequence], labels: np.ndarray,
                         suffix: TokenSequence, baseline: np.ndarray, gate: Optional[DetectorGate]) -> np.ndarray:
    suffixed = [s.concat(suffix) for s in sequences]
    values = sample_objectives(model, suffixed, labels)
    if gate is not None:
        # Flagged samples fall back to their unmodified input
        values = np.where(gate.accepts_batch(suffixed), values, baseline)
    return values


def concat_objective(model: ClassifierModel, dataset: LabeledDataset, suffix: TokenSequence,
                     gate: Optional[DetectorGate] = None) -> float:
    """Dataset-mean objective after appending `suffix`"""
    if len(dataset) == 0:
        raise DataError("concatenation attack needs a non-empty dataset")
    sequences, labels = dataset.sequences(), dataset.labels()
    baseline = sample_objectives(model, sequences, labels)
    return float(np.mean(_suffixed_objectives(model, sequences, labels, suffix, baseline, gate)))


def concat_universal(model: ClassifierModel, dataset: LabeledDataset, cfg: AttackConfig,
                     vocab: Optional[Vocabulary] = None, gate: Optional[DetectorGate] = None) -> TokenSequence:
    """
    Greedy universal suffix of length cfg.budget.

    Each appended word is the vocabulary argmax of the dataset-mean objective;
    ties go to the lowest token id. Reserved ids are never candidates.
    """
    if cfg.kind != AttackKind.CONCATENATION:
        raise ConfigError(f"attack.kind: expected concatenation, got {cfg.kind.value}")
    if len(dataset) == 0:
        raise DataError("concatenation attack needs a non-empty dataset")
    vocab = vocab or model.vocabulary
    candidates = vocab.content_ids
    model.vocabulary.check_ids(candidates)
    if not candidates:
        raise DataError("vocabulary has no candidate words")

    sequences, labels = dataset.sequences(), dataset.labels()
    baseline = sample_objectives(model, sequences, labels)
    suffix = TokenSequence(())
    for step in range(cfg.budget):
        means = np.array([
            np.mean(_suffixed_objectives(model, sequences, labels, suffix.concat(TokenSequence((c,))),
                                         baseline, gate))
            for c in candidates
        ])
        # argmax returns the first maximum, i.e. the lowest id
        best = candidates[int(np.argmax(means))]
        suffix = suffix.concat(TokenSequence((best,)))
        logger.info(f"suffix word {step + 1}/{cfg.budget}: '{vocab.token_of(best)}' "
                    f"(mean objective {means.max():.5f})")
    return suffix


def apply_suffix(model: ClassifierModel, dataset: LabeledDataset, suffix: TokenSequence,
                 gate: Optional[DetectorGate] = None) -> List[AdversarialExample]:
    """Append the universal suffix to every sample; gated samples the detector flags stay unmodified"""
    sequences = dataset.sequences()
    suffixed = [s.concat(suffix) for s in sequences]
    accepted = gate.accepts_batch(suffixed) if gate is not None else np.ones(len(suffixed), dtype=bool)
    before = model.predict_outputs(sequences)
    after_all = model.predict_outputs(suffixed)
    examples = []
    for i, sample in enumerate(dataset):
        perturbed = suffixed[i] if accepted[i] else sequences[i]
        after = after_all[i] if accepted[i] else before[i]
        if model.is_classifier:
            success = int(np.argmax(after)) != int(np.argmax(before[i]))
        else:
            success = float(after) > float(before[i])
        examples.append(AdversarialExample(
            original=sequences[i], perturbed=perturbed, kind=AttackKind.CONCATENATION,
            budget=len(suffix), realized=len(perturbed) - len(sequences[i]), success=success,
            label=sample.label, details={"rejected": not bool(accepted[i])},
        ))
    return examples
