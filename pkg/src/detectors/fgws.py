"""
Frequency-guided word substitution detector
Rare words are swapped for their most frequent synonym; the prediction shift is the score
"""
from typing import Optional, Sequence, Tuple

import numpy as np

from src.attacks.attack_types import SynonymLexicon
from src.classifier_model import ClassifierModel
from src.detectors.detector_score import DetectorScore
from src.errors import UnsupportedOperationError
from src.logger import get_logger
from src.text_data_model import FrequencyTable, TokenSequence

logger = get_logger(__name__)

DETECTOR_ID = "fgws"
DEFAULT_PERCENTILE = 10.0


def default_threshold(table: FrequencyTable, percentile: float = DEFAULT_PERCENTILE) -> float:
    return table.percentile(percentile)


def fgws_substitute(model: ClassifierModel, x: TokenSequence, table: FrequencyTable, threshold: float,
                    lexicon: SynonymLexicon) -> Tuple[TokenSequence, int]:
    """
    Replace every token rarer than `threshold` by its most frequent lexicon candidate.

    A token is kept if no candidate is strictly more frequent than it; equally
    frequent candidates keep lexicon order. Returns the new sequence and the
    number of replacements.
    """
    vocab = model.vocabulary
    replaced = 0
    out = x
    for position, token_id in enumerate(x):
        frequency = table.count(vocab.token_of(token_id))
        if frequency >= threshold:
            continue
        candidates = lexicon.candidates(token_id)
        if not candidates:
            continue
        frequencies = [table.count(vocab.token_of(c)) for c in candidates]
        best = int(np.argmax(frequencies))
        if frequencies[best] > frequency:
            out = out.replace(position, candidates[best])
            replaced += 1
    return out, replaced


def fgws_scores(model: ClassifierModel, inputs: Sequence[TokenSequence], table: FrequencyTable,
                threshold: Optional[float], lexicon: SynonymLexicon) -> np.ndarray:
    """|change in the probability of the originally predicted class|, one per input, in [0, 1]"""
    if not model.is_classifier:
        raise UnsupportedOperationError("the frequency-substitution detector needs a classification head")
    if threshold is None:
        threshold = default_threshold(table)
    if len(inputs) == 0:
        return np.zeros(0)
    substituted = [fgws_substitute(model, x, table, threshold, lexicon)[0] for x in inputs]
    before = model.predict_outputs(list(inputs))
    after = model.predict_outputs(substituted)
    predicted = np.argmax(before, axis=1)
    rows = np.arange(len(inputs))
    scores = np.abs(before[rows, predicted] - after[rows, predicted])
    unchanged = np.array([a == b for a, b in zip(inputs, substituted)])
    scores[unchanged] = 0.0
    return np.clip(scores, 0.0, 1.0)


def fgws_score(model: ClassifierModel, x: TokenSequence, table: FrequencyTable, threshold: Optional[float],
               lexicon: SynonymLexicon) -> DetectorScore:
    return DetectorScore(float(fgws_scores(model, [x], table, threshold, lexicon)[0]), DETECTOR_ID)


class FGWSScorer:
    def __init__(self, model: ClassifierModel, table: FrequencyTable, lexicon: SynonymLexicon,
                 threshold: Optional[float] = None):
        self.model = model
        self.table = table
        self.lexicon = lexicon
        self.threshold = default_threshold(table) if threshold is None else threshold

    def __call__(self, inputs: Sequence[TokenSequence]) -> np.ndarray:
        return fgws_scores(self.model, inputs, self.table, self.threshold, self.lexicon)
