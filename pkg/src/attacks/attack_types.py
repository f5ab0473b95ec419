"""
Shared attack data types: configuration, results, synonym lexicon, detector gate
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import ConfigError, DataError
from src.logger import get_logger
from src.text_data_model import TokenSequence, Vocabulary

logger = get_logger(__name__)

AttackInput = Union[TokenSequence, np.ndarray]


class AttackKind(Enum):
    SUBSTITUTION = "substitution"
    CONCATENATION = "concatenation"
    PGD = "pgd"
    GRID = "grid"
    GRID_PGD = "grid_pgd"

    @property
    def is_discrete(self) -> bool:
        return self in (AttackKind.SUBSTITUTION, AttackKind.CONCATENATION, AttackKind.GRID)


@dataclass(frozen=True)
class AttackConfig:
    """Budget N (discrete kinds) or epsilon (continuous kinds), plus step settings"""
    kind: AttackKind
    budget: Optional[int] = None
    epsilon: Optional[float] = None
    alpha: float = 1.0
    steps: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind.is_discrete:
            if self.budget is None or self.epsilon is not None:
                raise ConfigError(f"attack.budget: {self.kind.value} attacks take an edit budget N and no epsilon")
            if self.budget < 0:
                raise ConfigError("attack.budget: N must be >= 0")
        else:
            if self.epsilon is None or self.budget is not None:
                raise ConfigError(f"attack.epsilon: {self.kind.value} attacks take an epsilon and no edit budget")
            if self.epsilon < 0:
                raise ConfigError("attack.epsilon: must be >= 0")
        if self.alpha <= 0:
            raise ConfigError("attack.alpha: must be > 0")
        if self.steps < 0:
            raise ConfigError("attack.steps: must be >= 0")

    @property
    def limit(self) -> float:
        return float(self.budget) if self.kind.is_discrete else float(self.epsilon)


@dataclass
class AdversarialExample:
    """An original input, its perturbed counterpart and how the attack went"""
    original: AttackInput
    perturbed: AttackInput
    kind: AttackKind
    budget: float
    realized: float                  # edit count or ||delta||_inf
    success: bool
    label: Any = None
    details: Dict[str, Any] = field(default_factory=dict)

    def to_record(self, vocabulary: Optional[Vocabulary] = None) -> Dict[str, Any]:
        """JSON-lines record {original, perturbed, kind, budget, realized, success}"""
        return {
            "original": _render(self.original, vocabulary),
            "perturbed": _render(self.perturbed, vocabulary),
            "kind": self.kind.value,
            "budget": self.budget,
            "realized": self.realized,
            "success": bool(self.success),
        }


def _render(value: AttackInput, vocabulary: Optional[Vocabulary]):
    if isinstance(value, TokenSequence):
        return vocabulary.decode(value) if vocabulary is not None else value.to_list()
    return np.asarray(value).tolist()


class SynonymLexicon:
    """Token id -> ordered candidate substitute ids"""

    def __init__(self, mapping: Optional[Mapping[int, Sequence[int]]] = None):
        self._candidates: Dict[int, Tuple[int, ...]] = {}
        for token_id, candidates in (mapping or {}).items():
            self.set(token_id, candidates)

    def set(self, token_id: int, candidates: Iterable[int]):
        unique: List[int] = []
        for c in candidates:
            c = int(c)
            if c == int(token_id):
                raise DataError(f"lexicon maps token {token_id} to itself")
            if c not in unique:
                unique.append(c)
        if unique:
            self._candidates[int(token_id)] = tuple(unique)

    def candidates(self, token_id: int) -> Tuple[int, ...]:
        return self._candidates.get(int(token_id), ())

    def __len__(self) -> int:
        return len(self._candidates)

    def items(self):
        return self._candidates.items()

    def validate(self, vocabulary: Vocabulary):
        for token_id, candidates in self._candidates.items():
            vocabulary.check_ids((token_id,) + candidates)

    @classmethod
    def from_words(cls, word_map: Mapping[str, Sequence[str]], vocabulary: Vocabulary) -> Tuple["SynonymLexicon", int]:
        """Build from words; entries with out-of-vocabulary words are skipped and counted"""
        lexicon = cls()
        skipped = 0
        for word, synonyms in word_map.items():
            if word not in vocabulary:
                skipped += 1
                continue
            known = [vocabulary.id_of(s) for s in synonyms if s in vocabulary and s != word]
            skipped += sum(1 for s in synonyms if s not in vocabulary)
            lexicon.set(vocabulary.id_of(word), known)
        if skipped:
            logger.warning(f"Lexicon: {skipped} unknown words ignored")
        return lexicon, skipped

    def to_words(self, vocabulary: Vocabulary) -> Dict[str, List[str]]:
        return {vocabulary.token_of(t): [vocabulary.token_of(c) for c in cands]
                for t, cands in sorted(self._candidates.items())}


class DetectorGate:
    """
    Accepts an attack candidate only if the detector scores it at or below beta.

    `scorer` maps a list of inputs to an array of detector scores.
    """

    def __init__(self, scorer: Callable[[List[AttackInput]], np.ndarray], beta: float):
        self.scorer = scorer
        self.beta = float(beta)

    def accepts_batch(self, inputs: List[AttackInput]) -> np.ndarray:
        if len(inputs) == 0:
            return np.zeros(0, dtype=bool)
        return np.asarray(self.scorer(list(inputs)), dtype=np.float64) <= self.beta

    def accepts(self, x: AttackInput) -> bool:
        return bool(self.accepts_batch([x])[0])
