"""
Detection-aware attack wrapper
Runs a greedy base attack with every detector-flagged candidate rejected
"""
from typing import Callable, List

import numpy as np

from src.attacks.attack_types import AdversarialExample, AttackInput, DetectorGate
from src.logger import get_logger

logger = get_logger(__name__)


def detection_aware_attack(base_attack: Callable[..., AdversarialExample],
                           scorer: Callable[[List[AttackInput]], np.ndarray], beta: float,
                           *args, **kwargs) -> AdversarialExample:
    """
    Call `base_attack(*args, gate=..., **kwargs)` with candidates restricted to detector score <= beta.

    Every applied edit passed the gate, so an edited output always scores <= beta.
    An output with zero edits is the original input, which may itself be flagged;
    details["original_flagged"] records that case.
    """
    gate = DetectorGate(scorer, beta)
    example = base_attack(*args, gate=gate, **kwargs)
    if example.realized == 0:
        example.details["original_flagged"] = not gate.accepts(example.original)
    return example
