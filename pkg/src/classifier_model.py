"""
Toy differentiable text classifier: classify(encode(embed(x)))
Embedding table -> attention (or mean) pooling -> tanh projection -> output stage
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import DataError, DimensionMismatchError
from src.logger import get_logger
from src.numerics import softmax
from src.output_stage import HeadCache, OutputHead
from src.settings import HeadType, ModelSettings, Pooling
from src.text_data_model import LabeledDataset, PAD_ID, TokenSequence, Vocabulary, pad_batch

logger = get_logger(__name__)

LAYER_NORM_EPS = 1e-5
# Forward passes are chunked so attack sweeps never build huge intermediate arrays
BATCH_CHUNK = 2048


@dataclass
class EncoderCache:
    embeddings: np.ndarray       # (n, L, d_in)
    mask: np.ndarray             # (n, L) bool
    weights: np.ndarray          # pooling weights alpha (n, L)
    pooled: np.ndarray           # u (n, d_in)
    activated: np.ndarray        # tanh output (n, d)
    normalized: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None

    @property
    def output(self) -> np.ndarray:
        return self.activated if self.normalized is None else self.normalized


@dataclass
class TrainingHyperparams:
    learning_rate: float = 0.1
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0


@dataclass
class TrainingResult:
    model: "ClassifierModel"
    epoch_losses: List[float] = field(default_factory=list)


class ClassifierModel:
    """Encoder and output stage with manual gradients"""

    def __init__(self, vocabulary: Vocabulary, params: Dict[str, np.ndarray], head: OutputHead,
                 pooling: Pooling = Pooling.ATTENTION, normalize_embedding: bool = False, seed: int = 0):
        self.vocabulary = vocabulary
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.head = head
        self.pooling = pooling
        self.normalize_embedding = normalize_embedding
        self.seed = seed
        if self.params["embedding"].shape[0] != len(vocabulary):
            raise DimensionMismatchError("embedding table rows must equal the vocabulary size")

    @classmethod
    def initialize(cls, vocabulary: Vocabulary, settings: ModelSettings, num_classes: int, seed: int) -> "ClassifierModel":
        """Fresh random parameters from a seeded stream"""
        rng = np.random.default_rng(seed)
        d_in, d = settings.input_dim, settings.embedding_dim
        embedding = rng.normal(0.0, settings.init_scale, size=(len(vocabulary), d_in))
        embedding[PAD_ID] = 0.0
        params = {
            "embedding": embedding,
            "attention": rng.normal(0.0, 0.1, size=d_in),
            "encoder_weight": rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d, d_in)),
            "encoder_bias": np.zeros(d),
        }
        head = OutputHead.initialize(rng, d, HeadType(settings.head), num_classes, settings.dropout)
        return cls(vocabulary, params, head, Pooling(settings.pooling), settings.normalize_embedding, seed)

    # Structure

    @property
    def model_id(self) -> str:
        return f"text-{self.pooling.value}-{self.head.head_type.value}"

    @property
    def input_dim(self) -> int:
        return int(self.params["embedding"].shape[1])

    @property
    def embedding_dim(self) -> int:
        return int(self.params["encoder_weight"].shape[0])

    @property
    def is_classifier(self) -> bool:
        return self.head.is_classifier

    @property
    def num_classes(self) -> int:
        return self.head.num_classes

    def copy(self) -> "ClassifierModel":
        return ClassifierModel(self.vocabulary, {k: v.copy() for k, v in self.params.items()},
                               self.head.copy(), self.pooling, self.normalize_embedding, self.seed)

    def all_params(self) -> Dict[str, np.ndarray]:
        merged = dict(self.params)
        merged["head_weight"] = self.head.weight
        merged["head_bias"] = self.head.bias
        return merged

    # Forward

    def embed(self, x: TokenSequence) -> np.ndarray:
        """Row lookup h_i = E[w_i]; shape (L, d_in)"""
        self.vocabulary.check_ids(x.ids)
        return self.params["embedding"][np.asarray(x.ids, dtype=np.int64)].copy()

    def embed_batch(self, sequences: Sequence[TokenSequence]) -> Tuple[np.ndarray, np.ndarray]:
        for seq in sequences:
            self.vocabulary.check_ids(seq.ids)
        ids, mask = pad_batch(sequences)
        return self.params["embedding"][ids], mask

    def _encode_forward(self, embeddings: np.ndarray, mask: np.ndarray) -> EncoderCache:
        if embeddings.shape[-1] != self.input_dim:
            raise DimensionMismatchError(
                f"input embeddings have dimension {embeddings.shape[-1]}, encoder expects {self.input_dim}")
        if embeddings.shape[1] == 0 or np.any(mask.sum(axis=1) == 0):
            raise DataError("cannot encode an empty sequence")
        if self.pooling == Pooling.ATTENTION:
            scores = embeddings @ self.params["attention"]
            weights = softmax(scores, axis=1, mask=mask)
        else:
            m = mask.astype(np.float64)
            weights = m / m.sum(axis=1, keepdims=True)
        pooled = np.einsum("nl,nld->nd", weights, embeddings)
        activated = np.tanh(pooled @ self.params["encoder_weight"].T + self.params["encoder_bias"])
        cache = EncoderCache(embeddings, mask, weights, pooled, activated)
        if self.normalize_embedding:
            mean = activated.mean(axis=1, keepdims=True)
            std = np.sqrt(activated.var(axis=1, keepdims=True) + LAYER_NORM_EPS)
            cache.normalized = (activated - mean) / std
            cache.std = std
        return cache

    def encode(self, h: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
        """Sentence embedding for one embedding sequence (L, d_in) -> (d,)"""
        h = np.asarray(h, dtype=np.float64)
        if h.ndim != 2 or h.shape[0] == 0:
            raise DataError("cannot encode an empty sequence")
        m = np.ones(h.shape[0], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        return self._encode_forward(h[None], m[None]).output[0]

    def encode_batch(self, embeddings: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return self._encode_forward(np.asarray(embeddings, dtype=np.float64), mask).output

    def classify(self, e: np.ndarray):
        """Output stage: probability vector, or a float score for regression"""
        e = np.asarray(e, dtype=np.float64)
        out = self.head.forward(e[None]).outputs[0]
        return out if self.is_classifier else float(out)

    def classify_batch(self, e: np.ndarray) -> np.ndarray:
        return self.head.forward(np.asarray(e, dtype=np.float64)).outputs

    def forward(self, x: TokenSequence):
        """Fused inference pass; identical to classify(encode(embed(x)))"""
        return self.classify(self.encode(self.embed(x), np.asarray(x.ids) != PAD_ID))

    def sentence_embeddings(self, sequences: Sequence[TokenSequence]) -> np.ndarray:
        """Sentence embeddings for many sequences, (n, d), inference mode"""
        chunks = []
        for start in range(0, len(sequences), BATCH_CHUNK):
            h, mask = self.embed_batch(sequences[start:start + BATCH_CHUNK])
            chunks.append(self.encode_batch(h, mask))
        if not chunks:
            return np.zeros((0, self.embedding_dim))
        return np.concatenate(chunks, axis=0)

    def predict_outputs(self, sequences: Sequence[TokenSequence]) -> np.ndarray:
        """Probabilities (n, K) or scores (n,) in inference mode"""
        return self.classify_batch(self.sentence_embeddings(sequences))

    def outputs_from_embeddings(self, embeddings: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Outputs for (possibly perturbed) input embedding sequences"""
        return self.classify_batch(self.encode_batch(embeddings, mask))

    def predict(self, sequences: Sequence[TokenSequence]) -> np.ndarray:
        outputs = self.predict_outputs(sequences)
        return np.argmax(outputs, axis=1) if self.is_classifier else outputs

    # Backward

    def _encoder_backward(self, cache: EncoderCache, d_output: np.ndarray) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
        d_act = d_output
        if cache.normalized is not None:
            y = cache.normalized
            d_act = (d_output - d_output.mean(axis=1, keepdims=True)
                     - y * (d_output * y).mean(axis=1, keepdims=True)) / cache.std
        d_pre = d_act * (1.0 - cache.activated ** 2)
        grads = {
            "encoder_weight": d_pre.T @ cache.pooled,
            "encoder_bias": d_pre.sum(axis=0),
        }
        d_pooled = d_pre @ self.params["encoder_weight"]
        d_embeddings = cache.weights[..., None] * d_pooled[:, None, :]
        if self.pooling == Pooling.ATTENTION:
            d_weights = np.einsum("nld,nd->nl", cache.embeddings, d_pooled)
            d_scores = cache.weights * (d_weights - np.sum(cache.weights * d_weights, axis=1, keepdims=True))
            d_embeddings = d_embeddings + d_scores[..., None] * self.params["attention"]
            grads["attention"] = np.einsum("nl,nld->d", d_scores, cache.embeddings)
        else:
            grads["attention"] = np.zeros_like(self.params["attention"])
        return grads, d_embeddings

    def _loss_and_grads(self, embeddings: np.ndarray, mask: np.ndarray, labels: np.ndarray,
                        dropout_mask: Optional[np.ndarray] = None) -> Tuple[float, Dict[str, np.ndarray], np.ndarray]:
        enc = self._encode_forward(embeddings, mask)
        head_cache: HeadCache = self.head.forward(enc.output, dropout_mask)
        loss, dlogits = self.head.loss_and_output_grad(head_cache, labels)
        head_grads, d_sentence = self.head.backward(head_cache, dlogits)
        enc_grads, d_embeddings = self._encoder_backward(enc, d_sentence)
        enc_grads.update(head_grads)
        return loss, enc_grads, d_embeddings

    def _check_label(self, label):
        if self.is_classifier:
            if not isinstance(label, (int, np.integer)) or not 0 <= int(label) < self.num_classes:
                raise DataError(f"invalid class label {label!r} for a {self.num_classes}-class head")
        elif not np.isfinite(float(label)):
            raise DataError(f"invalid regression target {label!r}")

    def loss_grad_wrt_embeddings(self, x: TokenSequence, label) -> np.ndarray:
        """Gradient of the training loss w.r.t. each input embedding h_i, shape (L, d_in)"""
        self._check_label(label)
        return self.loss_grad_for_embeddings(self.embed(x), np.asarray(x.ids) != PAD_ID, label)

    def loss_grad_for_embeddings(self, h: np.ndarray, mask: np.ndarray, label) -> np.ndarray:
        """Same gradient for an arbitrary (e.g. perturbed) embedding sequence"""
        self._check_label(label)
        _, _, d_embeddings = self._loss_and_grads(np.asarray(h, dtype=np.float64)[None],
                                                  np.asarray(mask, dtype=bool)[None], np.array([label]))
        return d_embeddings[0]

    def loss(self, x: TokenSequence, label) -> float:
        self._check_label(label)
        h, mask = self.embed_batch([x])
        loss, _, _ = self._loss_and_grads(h, mask, np.array([label]))
        return loss

    # Sampling

    def mc_samples(self, x: TokenSequence, count: int, seed: Optional[int] = None) -> np.ndarray:
        """count dropout-active probability vectors for x, shape (count, K)"""
        e = self.sentence_embeddings([x])[0]
        return self.head.mc_samples(e, count, self.seed if seed is None else seed)


def _label_array(dataset: LabeledDataset, model: ClassifierModel) -> np.ndarray:
    labels = dataset.labels()
    if model.is_classifier:
        if dataset.is_regression:
            raise DataError("classification model cannot train on regression targets")
        if np.any(labels < 0) or np.any(labels >= model.num_classes):
            raise DataError("dataset labels outside the model's class range")
    return labels


def train(model: ClassifierModel, data: LabeledDataset, hyper: TrainingHyperparams) -> TrainingResult:
    """
    Plain minibatch SGD on a private copy of the model.

    Deterministic given hyper.seed; dropout is active during training.
    """
    if len(data) == 0:
        raise DataError("cannot train on an empty dataset")
    trained = model.copy()
    labels = _label_array(data, trained)
    sequences = data.sequences()
    rng = np.random.default_rng(hyper.seed)
    losses: List[float] = []

    for epoch in range(hyper.epochs):
        order = rng.permutation(len(sequences))
        total = 0.0
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            batch = [sequences[i] for i in idx]
            ids, mask = pad_batch(batch)
            embeddings = trained.params["embedding"][ids]
            enc_dim = trained.embedding_dim
            dropout_mask = trained.head.draw_dropout(rng, (len(idx), enc_dim))
            loss, grads, d_embeddings = trained._loss_and_grads(embeddings, mask, labels[idx], dropout_mask)

            d_table = np.zeros_like(trained.params["embedding"])
            np.add.at(d_table, ids, d_embeddings)
            grads["embedding"] = d_table

            for name in ("embedding", "attention", "encoder_weight", "encoder_bias"):
                trained.params[name] -= hyper.learning_rate * grads[name]
            trained.head.weight -= hyper.learning_rate * grads["head_weight"]
            trained.head.bias -= hyper.learning_rate * grads["head_bias"]
            total += loss * len(idx)

        epoch_loss = total / len(order)
        losses.append(epoch_loss)
        logger.info(f"epoch {epoch + 1}/{hyper.epochs}: loss {epoch_loss:.5f}")

    trained.params["embedding"][PAD_ID] = 0.0
    return TrainingResult(model=trained, epoch_losses=losses)


def accuracy(model: ClassifierModel, data: LabeledDataset) -> float:
    if len(data) == 0:
        raise DataError("accuracy of an empty dataset is undefined")
    return float(np.mean(model.predict(data.sequences()) == data.labels()))
