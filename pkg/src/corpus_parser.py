"""
Plain-text corpus file formats
Datasets (JSON lines), synonym lexicons, frequency tables, grid sets and attack results
"""
import json
import os
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.attacks.attack_types import AdversarialExample, SynonymLexicon
from src.errors import DataError
from src.logger import get_logger
from src.text_data_model import FrequencyTable, LabeledDataset, LabeledSample, Vocabulary, tokenize

logger = get_logger(__name__)


def _ensure_parent(path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)


def _read_lines(path: str) -> List[str]:
    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return f.read().splitlines()


# Datasets

def load_dataset(file_path: str, vocabulary: Optional[Vocabulary] = None,
                 num_classes: Optional[int] = None) -> LabeledDataset:
    """
    Read a JSON-lines dataset of {"text", "label"} records.

    Without a vocabulary one is built from the file's tokens in first-seen order;
    with one, unknown tokens map to the unknown id. Integer labels mean a
    classification set (num_classes inferred as max label + 1 unless given),
    any float label means regression.
    """
    records = []
    for line_no, line in enumerate(_read_lines(file_path), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            records.append((str(record["text"]), record["label"]))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise DataError(f"{file_path}:{line_no}: malformed dataset record ({e})")
    if not records:
        raise DataError(f"{file_path}: dataset is empty")

    if vocabulary is None:
        vocabulary = Vocabulary()
        for text, _ in records:
            for token in tokenize(text):
                vocabulary.add(token)

    regression = any(isinstance(label, float) for _, label in records)
    if not regression:
        labels = [int(label) for _, label in records]
        if min(labels) < 0:
            raise DataError(f"{file_path}: negative class label")
        inferred = max(labels) + 1
        if num_classes is None:
            num_classes = inferred
        elif inferred > num_classes:
            raise DataError(f"{file_path}: label {inferred - 1} exceeds {num_classes} classes")
    samples = [LabeledSample(vocabulary.encode(text), float(label) if regression else int(label))
               for text, label in records]
    name = os.path.splitext(os.path.basename(file_path))[0]
    logger.info(f"Loaded {len(samples)} samples from {file_path}")
    return LabeledDataset(samples, vocabulary, 0 if regression else num_classes, name)


def save_dataset(dataset: LabeledDataset, file_path: str):
    _ensure_parent(file_path)
    with open(file_path, "w", encoding="utf-8") as f:
        for sample in dataset:
            label = float(sample.label) if dataset.is_regression else int(sample.label)
            f.write(json.dumps({"text": dataset.vocabulary.decode(sample.tokens), "label": label}) + "\n")
    logger.debug(f"Saved {len(dataset)} samples to {file_path}")


# Lexicons

def parse_lexicon_lines(lines: Iterable[str]) -> Dict[str, List[str]]:
    """`word<TAB>syn1,syn2,...` records; blank and malformed lines are skipped"""
    word_map: Dict[str, List[str]] = {}
    for line in lines:
        if not line.strip():
            continue
        if "\t" not in line:
            logger.warning(f"Lexicon: skipping malformed line '{line[:40]}'")
            continue
        word, synonyms = line.split("\t", 1)
        word_map[word.strip().lower()] = [s.strip().lower() for s in synonyms.split(",") if s.strip()]
    return word_map


def load_lexicon(file_path: str, vocabulary: Vocabulary) -> Tuple[SynonymLexicon, int]:
    """Returns the lexicon and the count of ignored unknown words"""
    return SynonymLexicon.from_words(parse_lexicon_lines(_read_lines(file_path)), vocabulary)


def save_lexicon(lexicon: SynonymLexicon, vocabulary: Vocabulary, file_path: str):
    _ensure_parent(file_path)
    with open(file_path, "w", encoding="utf-8") as f:
        for word, synonyms in lexicon.to_words(vocabulary).items():
            f.write(f"{word}\t{','.join(synonyms)}\n")


# Frequency tables

def load_frequency_table(file_path: str) -> FrequencyTable:
    counts: Dict[str, int] = {}
    for line_no, line in enumerate(_read_lines(file_path), start=1):
        if not line.strip():
            continue
        try:
            token, count = line.split("\t")
            counts[token] = int(count)
        except ValueError:
            raise DataError(f"{file_path}:{line_no}: expected 'token<TAB>count'")
    return FrequencyTable(counts)


def save_frequency_table(table: FrequencyTable, file_path: str):
    _ensure_parent(file_path)
    with open(file_path, "w", encoding="utf-8") as f:
        for token, count in sorted(table.counts.items()):
            f.write(f"{token}\t{count}\n")


# Grid sets

def save_grid_set(grids: np.ndarray, labels: np.ndarray, file_path: str, levels: Optional[int] = None):
    _ensure_parent(file_path)
    with open(file_path, "wb") as f:
        np.savez(f, grids=np.asarray(grids, dtype=np.float64), labels=np.asarray(labels, dtype=np.int64),
                 levels=np.array(-1 if levels is None else levels))


def load_grid_set(file_path: str) -> Tuple[np.ndarray, np.ndarray, Optional[int]]:
    if not os.path.exists(file_path):
        raise DataError(f"file not found: {file_path}")
    try:
        with np.load(file_path) as data:
            levels = int(data["levels"])
            return data["grids"].astype(np.float64), data["labels"].astype(np.int64), (None if levels < 0 else levels)
    except (KeyError, ValueError, OSError) as e:
        raise DataError(f"{file_path}: not a grid set ({e})")


# Attack results

def save_attack_results(examples: Sequence[AdversarialExample], file_path: str,
                        vocabulary: Optional[Vocabulary] = None):
    _ensure_parent(file_path)
    with open(file_path, "w", encoding="utf-8") as f:
        for example in examples:
            f.write(json.dumps(example.to_record(vocabulary)) + "\n")
    logger.info(f"Wrote {len(examples)} attack results to {file_path}")


# Detector scores

def load_scores(file_path: str) -> Tuple[np.ndarray, np.ndarray]:
    """Read `score,label` lines (label 0 = original, 1 = adversarial); a header line is skipped"""
    scores, labels = [], []
    for line_no, line in enumerate(_read_lines(file_path), start=1):
        line = line.strip()
        if not line or line.lower().startswith("score"):
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            if len(parts) != 2:
                raise ValueError("expected two columns")
            scores.append(float(parts[0]))
            labels.append(int(parts[1]))
        except ValueError as e:
            raise DataError(f"{file_path}:{line_no}: malformed score line ({e})")
    return np.array(scores, dtype=np.float64), np.array(labels, dtype=np.int64)
