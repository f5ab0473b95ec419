"""
Synthetic corpora standing in for real datasets
Planted class keywords in filler text, a synonym lexicon with rare and unseen entries, and a grid analog
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.attacks.attack_types import SynonymLexicon
from src.attacks.quantization import MAX_PIXEL, quantize_grid
from src.errors import ConfigError
from src.logger import get_logger
from src.settings import CorpusSettings
from src.text_data_model import FrequencyTable, LabeledDataset, LabeledSample, TokenSequence, Vocabulary

logger = get_logger(__name__)


@dataclass(frozen=True)
class SynthCorpusSpec:
    num_classes: int = 4
    vocab_size: int = 120
    keywords_per_class: int = 4
    synonyms_per_keyword: int = 3
    keywords_per_sample: int = 2
    min_length: int = 6
    max_length: int = 12
    label_noise: float = 0.0
    distractor_rate: float = 0.3
    synonym_rate: float = 0.02
    unseen_synonym_fraction: float = 0.34
    train_size: int = 2000
    test_size: int = 500
    regression: bool = False

    @classmethod
    def from_settings(cls, settings: CorpusSettings) -> "SynthCorpusSpec":
        return cls(**{name: getattr(settings, name) for name in cls.__dataclass_fields__})

    def validate(self):
        if self.num_classes < 2:
            raise ConfigError("corpus.num_classes: need at least 2 classes")
        if self.vocab_size < 1:
            raise ConfigError("corpus.vocab_size: need at least one filler word")
        if self.keywords_per_class < 1 or self.keywords_per_sample < 1:
            raise ConfigError("corpus.keywords_per_class: keyword counts must be >= 1")
        if self.synonyms_per_keyword < 0:
            raise ConfigError("corpus.synonyms_per_keyword: must be >= 0")
        if self.min_length < 1 or self.max_length < self.min_length:
            raise ConfigError("corpus.min_length: lengths must satisfy 1 <= min_length <= max_length")
        if self.min_length < self.keywords_per_sample + 1:
            raise ConfigError("corpus.min_length: must leave room for the keywords and one distractor")
        for name in ("label_noise", "distractor_rate", "synonym_rate", "unseen_synonym_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"corpus.{name}: must be in [0, 1]")
        if self.train_size < 1 or self.test_size < 1:
            raise ConfigError("corpus.train_size: sample counts must be >= 1")


@dataclass
class SynthCorpus:
    train: LabeledDataset
    test: LabeledDataset
    frequency_table: FrequencyTable
    lexicon: SynonymLexicon
    keywords: Dict[int, List[str]] = field(default_factory=dict)      # class -> keywords
    unseen_synonyms: List[str] = field(default_factory=list)
    train_planted: Optional[np.ndarray] = None                      # keyword class before label noise


def _build_vocabulary(spec: SynthCorpusSpec, rng: np.random.Generator):
    vocab = Vocabulary(f"w{i:03d}" for i in range(spec.vocab_size))
    keywords: Dict[int, List[str]] = {}
    synonyms: Dict[str, List[str]] = {}
    for k in range(spec.num_classes):
        keywords[k] = [f"c{k}k{j}" for j in range(spec.keywords_per_class)]
        for word in keywords[k]:
            vocab.add(word)
            synonyms[word] = [f"{word}s{m}" for m in range(spec.synonyms_per_keyword)]
            for s in synonyms[word]:
                vocab.add(s)
    all_synonyms = [s for word in sorted(synonyms) for s in synonyms[word]]
    unseen_count = int(round(spec.unseen_synonym_fraction * len(all_synonyms)))
    unseen = sorted(rng.choice(all_synonyms, size=unseen_count, replace=False).tolist()) if unseen_count else []
    return vocab, keywords, synonyms, unseen


def _build_lexicon(vocab: Vocabulary, synonyms: Dict[str, List[str]]) -> SynonymLexicon:
    """Symmetric: keyword -> its synonyms, synonym -> keyword then the sibling synonyms"""
    word_map: Dict[str, List[str]] = {}
    for word, group in synonyms.items():
        if not group:
            continue
        word_map[word] = list(group)
        for s in group:
            word_map[s] = [word] + [o for o in group if o != s]
    lexicon, _ = SynonymLexicon.from_words(word_map, vocab)
    return lexicon


def _sample(spec: SynthCorpusSpec, rng: np.random.Generator, vocab: Vocabulary, keywords: Dict[int, List[str]],
            seen_synonyms: List[str]) -> Tuple[TokenSequence, float, int]:
    length = int(rng.integers(spec.min_length, spec.max_length + 1))
    tokens = [f"w{int(rng.integers(spec.vocab_size)):03d}" for _ in range(length)]
    if seen_synonyms:
        for i in range(length):
            if rng.random() < spec.synonym_rate:
                tokens[i] = seen_synonyms[int(rng.integers(len(seen_synonyms)))]

    slots = rng.permutation(length)
    if spec.regression:
        picks = rng.integers(2, size=spec.keywords_per_sample)
        planted = 0
        for slot, group in zip(slots, picks):
            tokens[slot] = keywords[int(group)][int(rng.integers(spec.keywords_per_class))]
        # Score = fraction of keywords drawn from the positive group 0
        label = float(np.mean(picks == 0))
        if rng.random() < spec.label_noise:
            label = float(rng.random())
    else:
        planted = int(rng.integers(spec.num_classes))
        for slot in slots[:spec.keywords_per_sample]:
            tokens[slot] = keywords[planted][int(rng.integers(spec.keywords_per_class))]
        if rng.random() < spec.distractor_rate:
            other = int(rng.integers(spec.num_classes - 1))
            other = other + 1 if other >= planted else other
            tokens[slots[spec.keywords_per_sample]] = keywords[other][int(rng.integers(spec.keywords_per_class))]
        label = planted
        if rng.random() < spec.label_noise:
            label = int(rng.integers(spec.num_classes))
    return TokenSequence(tuple(vocab.id_of(t) for t in tokens)), label, planted


def synth_corpus(spec: SynthCorpusSpec, seed: int) -> SynthCorpus:
    """
    Generate train/test sets, the training frequency table and the synonym lexicon.

    Each sample plants keywords_per_sample keywords of its class in random filler,
    plus (with distractor_rate) one keyword of another class. Seen synonyms leak into
    filler slots at synonym_rate; unseen synonyms never occur. Deterministic given seed.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    vocab, keywords, synonyms, unseen = _build_vocabulary(spec, rng)
    unseen_set = set(unseen)
    seen = [s for word in sorted(synonyms) for s in synonyms[word] if s not in unseen_set]
    num_classes = 0 if spec.regression else spec.num_classes

    def generate(count: int, name: str):
        samples, planted = [], []
        for _ in range(count):
            tokens, label, p = _sample(spec, rng, vocab, keywords, seen)
            samples.append(LabeledSample(tokens, label))
            planted.append(p)
        return LabeledDataset(samples, vocab, num_classes, name), np.array(planted)

    train, train_planted = generate(spec.train_size, "synth-train")
    test, _ = generate(spec.test_size, "synth-test")
    table = FrequencyTable.from_dataset(train)
    lexicon = _build_lexicon(vocab, synonyms)
    logger.info(f"Synthetic corpus: {len(train)} train / {len(test)} test, |V| = {len(vocab)}, "
                f"{len(unseen)} unseen synonyms")
    return SynthCorpus(train, test, table, lexicon, keywords, unseen, train_planted)


def keyword_vote(corpus: SynthCorpus, sequence: TokenSequence) -> int:
    """Majority vote of planted keywords; ties keep the lowest class"""
    vocab = corpus.train.vocabulary
    owner = {vocab.id_of(w): k for k, words in corpus.keywords.items() for w in words}
    votes = np.zeros(len(corpus.keywords), dtype=np.int64)
    for token in sequence:
        if token in owner:
            votes[owner[token]] += 1
    return int(np.argmax(votes))


# Image analog

@dataclass
class GridCorpus:
    train_grids: np.ndarray
    train_labels: np.ndarray
    test_grids: np.ndarray
    test_labels: np.ndarray
    levels: Optional[int]
    prototypes: Optional[np.ndarray] = None      # unknown for grid sets read from disk


def grid_prototypes(settings: CorpusSettings, rng: np.random.Generator) -> np.ndarray:
    """
    Shared mid-gray background plus a +/- grid_separation sign pattern per class.

    Two classes differ by 2 * grid_separation on about half the pixels, so the
    classes overlap under grid_noise and a small perturbation can cross a boundary.
    """
    size = settings.grid_size
    background = rng.uniform(0.25 * MAX_PIXEL, 0.75 * MAX_PIXEL, size=(size, size))
    signs = rng.choice(np.array([-1.0, 1.0]), size=(settings.num_classes, size, size))
    return background + settings.grid_separation * signs


def synth_grid_corpus(settings: CorpusSettings, seed: int, levels: Optional[int] = None) -> GridCorpus:
    """
    Class prototypes plus Gaussian pixel noise, clipped to 0..255.

    levels = None keeps continuous values; otherwise every grid is quantized onto Z_q.
    """
    if settings.grid_size < 2:
        raise ConfigError("corpus.grid_size: must be >= 2")
    if settings.num_classes < 2:
        raise ConfigError("corpus.num_classes: need at least 2 classes")
    rng = np.random.default_rng(seed)
    size = settings.grid_size
    prototypes = grid_prototypes(settings, rng)

    def generate(count: int):
        labels = rng.integers(settings.num_classes, size=count)
        noise = rng.normal(0.0, settings.grid_noise, size=(count, size, size))
        grids = np.clip(prototypes[labels] + noise, 0.0, MAX_PIXEL)
        if levels is not None:
            grids = quantize_grid(grids, levels).astype(np.float64)
        return grids, labels.astype(np.int64)

    train_grids, train_labels = generate(settings.grid_train_size)
    test_grids, test_labels = generate(settings.grid_test_size)
    return GridCorpus(train_grids, train_labels, test_grids, test_labels, levels, prototypes)
