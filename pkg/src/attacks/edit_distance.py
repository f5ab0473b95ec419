"""
Word-level edit distance
Swap, insertion and deletion each cost one edit
"""
from typing import Sequence

import numpy as np

from src.text_data_model import TokenSequence


def edit_distance(a: TokenSequence, b: TokenSequence) -> int:
    """Levenshtein distance between two token sequences"""
    return _levenshtein(a.ids, b.ids)


def _levenshtein(a: Sequence[int], b: Sequence[int]) -> int:
    if len(a) == 0:
        return len(b)
    if len(b) == 0:
        return len(a)
    previous = np.arange(len(b) + 1, dtype=np.int64)
    for i, token in enumerate(a, start=1):
        current = np.empty_like(previous)
        current[0] = i
        for j, other in enumerate(b, start=1):
            current[j] = min(previous[j] + 1,
                             current[j - 1] + 1,
                             previous[j - 1] + (token != other))
        previous = current
    return int(previous[-1])
