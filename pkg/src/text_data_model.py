"""
Data model for token sequences, vocabularies and labelled datasets
"""
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import DataError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1

Label = Union[int, float]


def tokenize(text: str) -> List[str]:
    """The single tokenizer: lowercase and split on whitespace"""
    return text.lower().split()


class Vocabulary:
    """Bijective token <-> id mapping with reserved padding and unknown ids"""

    def __init__(self, tokens: Iterable[str] = ()):
        self._id_to_token: List[str] = [PAD_TOKEN, UNK_TOKEN]
        self._token_to_id: Dict[str, int] = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
        for token in tokens:
            self.add(token)

    def add(self, token: str) -> int:
        """Add a token (no-op if present) and return its id"""
        if token in self._token_to_id:
            return self._token_to_id[token]
        self._token_to_id[token] = len(self._id_to_token)
        self._id_to_token.append(token)
        return self._token_to_id[token]

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id_of(self, token: str) -> int:
        """Id of a token; unknown tokens map to UNK_ID"""
        return self._token_to_id.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        self.check_ids([token_id])
        return self._id_to_token[token_id]

    def is_valid_id(self, token_id: int) -> bool:
        return 0 <= int(token_id) < len(self._id_to_token)

    def check_ids(self, ids: Iterable[int]):
        for token_id in ids:
            if not self.is_valid_id(token_id):
                raise DataError(f"token id {token_id} is outside the vocabulary (size {len(self)})")

    @property
    def content_ids(self) -> List[int]:
        """All ids except the reserved ones"""
        return list(range(2, len(self._id_to_token)))

    def encode(self, text: str) -> "TokenSequence":
        return TokenSequence(tuple(self.id_of(t) for t in tokenize(text)))

    def decode(self, sequence: "TokenSequence") -> str:
        return " ".join(self.token_of(i) for i in sequence.ids)

    def to_list(self) -> List[str]:
        return list(self._id_to_token)

    @classmethod
    def from_list(cls, tokens: Sequence[str]) -> "Vocabulary":
        if len(tokens) < 2 or tokens[0] != PAD_TOKEN or tokens[1] != UNK_TOKEN:
            raise DataError("vocabulary list must start with the reserved padding and unknown tokens")
        vocab = cls()
        for token in tokens[2:]:
            if token in vocab:
                raise DataError(f"duplicate vocabulary token '{token}'")
            vocab.add(token)
        return vocab

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._id_to_token == other._id_to_token


@dataclass(frozen=True)
class TokenSequence:
    """A discrete input w_1..w_L as vocabulary ids"""
    ids: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[int]:
        return iter(self.ids)

    def __getitem__(self, index: int) -> int:
        return self.ids[index]

    def replace(self, position: int, token_id: int) -> "TokenSequence":
        """Copy with one position swapped"""
        ids = list(self.ids)
        ids[position] = token_id
        return TokenSequence(tuple(ids))

    def concat(self, suffix: "TokenSequence") -> "TokenSequence":
        return TokenSequence(self.ids + suffix.ids)

    def to_list(self) -> List[int]:
        return list(self.ids)


@dataclass
class LabeledSample:
    tokens: TokenSequence
    label: Label


@dataclass
class LabeledDataset:
    """Labelled token sequences over one vocabulary"""
    samples: List[LabeledSample]
    vocabulary: Vocabulary
    num_classes: int = 0             # 0 for regression data
    name: str = ""

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[LabeledSample]:
        return iter(self.samples)

    def __getitem__(self, index: int) -> LabeledSample:
        return self.samples[index]

    @property
    def is_regression(self) -> bool:
        return self.num_classes == 0

    def sequences(self) -> List[TokenSequence]:
        return [s.tokens for s in self.samples]

    def labels(self) -> np.ndarray:
        dtype = np.float64 if self.is_regression else np.int64
        return np.array([s.label for s in self.samples], dtype=dtype)

    def subset(self, indices: Iterable[int], name: Optional[str] = None) -> "LabeledDataset":
        return LabeledDataset([self.samples[i] for i in indices], self.vocabulary,
                              self.num_classes, name or self.name)

    def texts(self) -> List[str]:
        return [self.vocabulary.decode(s.tokens) for s in self.samples]


def pad_batch(sequences: Sequence[TokenSequence]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Stack sequences into an id matrix padded with PAD_ID.

    Returns (ids, mask) of shape (n, L_max); mask is True on real (non-padding) tokens.
    Padding ids inside a sequence are masked out too.
    """
    if len(sequences) == 0:
        return np.zeros((0, 1), dtype=np.int64), np.zeros((0, 1), dtype=bool)
    max_len = max(1, max(len(s) for s in sequences))
    ids = np.full((len(sequences), max_len), PAD_ID, dtype=np.int64)
    for row, seq in enumerate(sequences):
        ids[row, :len(seq)] = seq.ids
    return ids, ids != PAD_ID


@dataclass
class FrequencyTable:
    """Token counts over the original training corpus"""
    counts: Dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_dataset(cls, dataset: LabeledDataset) -> "FrequencyTable":
        counts: Dict[str, int] = {}
        for sample in dataset:
            for token_id in sample.tokens:
                token = dataset.vocabulary.token_of(token_id)
                counts[token] = counts.get(token, 0) + 1
        return cls(dict(sorted(counts.items())))

    def count(self, token: str) -> int:
        return self.counts.get(token, 0)

    def percentile(self, q: float) -> float:
        """q-th percentile of the per-type counts"""
        if not self.counts:
            return 0.0
        return float(np.percentile(np.array(list(self.counts.values()), dtype=np.float64), q))
