"""
N-gram language-model perplexity detector
Add-one smoothed counts over the clean training corpus
"""
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from src.detectors.detector_score import DetectorScore
from src.errors import ConfigError, DataError
from src.logger import get_logger
from src.text_data_model import TokenSequence

logger = get_logger(__name__)

DETECTOR_ID = "perplexity"
BOS_ID = -1
SUPPORTED_ORDERS = (1, 2, 3)

History = Tuple[int, ...]


@dataclass
class NGramLM:
    order: int
    vocab_size: int
    counts: Dict[History, Counter] = field(default_factory=dict)
    totals: Dict[History, int] = field(default_factory=dict)

    def probability(self, history: History, token: int) -> float:
        """Smoothed p(token | history) = (c(h, w) + 1) / (c(h) + |V|)"""
        history = tuple(history[-(self.order - 1):]) if self.order > 1 else ()
        seen = self.counts.get(history)
        count = seen[token] if seen is not None else 0
        return (count + 1.0) / (self.totals.get(history, 0) + self.vocab_size)

    def log_probabilities(self, x: TokenSequence) -> np.ndarray:
        padded = (BOS_ID,) * (self.order - 1) + x.ids
        return np.array([
            math.log(self.probability(padded[i:i + self.order - 1], padded[i + self.order - 1]))
            for i in range(len(x))
        ])


def fit_ngram_lm(corpus: Sequence[TokenSequence], n: int = 2, vocab_size: Optional[int] = None) -> NGramLM:
    """
    Count n-grams with n - 1 beginning-of-sequence markers in front of every sequence.

    vocab_size defaults to the number of distinct token types in the corpus.
    """
    if n not in SUPPORTED_ORDERS:
        raise ConfigError(f"detectors.ngram_order: must be one of {SUPPORTED_ORDERS}, got {n}")
    if len(corpus) == 0 or all(len(x) == 0 for x in corpus):
        raise DataError("n-gram LM needs a non-empty corpus")
    counts: Dict[History, Counter] = defaultdict(Counter)
    types = set()
    for x in corpus:
        padded = (BOS_ID,) * (n - 1) + x.ids
        types.update(x.ids)
        for i in range(len(x)):
            counts[tuple(padded[i:i + n - 1])][padded[i + n - 1]] += 1
    size = len(types) if vocab_size is None else int(vocab_size)
    if size < 1:
        raise ConfigError("n-gram vocabulary size must be >= 1")
    totals = {h: sum(c.values()) for h, c in counts.items()}
    logger.debug(f"{n}-gram LM: {len(counts)} histories, |V| = {size}")
    return NGramLM(n, size, dict(counts), totals)


def perplexity(lm: NGramLM, x: TokenSequence) -> float:
    if len(x) == 0:
        raise DataError("perplexity of an empty sequence is undefined")
    return float(math.exp(-lm.log_probabilities(x).mean()))


def perplexity_score(lm: NGramLM, x: TokenSequence) -> DetectorScore:
    return DetectorScore(perplexity(lm, x), DETECTOR_ID)


class PerplexityScorer:
    def __init__(self, lm: NGramLM):
        self.lm = lm

    def __call__(self, inputs: Sequence[TokenSequence]) -> np.ndarray:
        return np.array([perplexity(self.lm, x) for x in inputs])
