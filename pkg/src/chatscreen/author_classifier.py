"""Shallow averaged-bag-of-features author scorer.

Each (author, conversation) unit is the mean embedding of its unigram and
adjacent-bigram features, mapped linearly to three classes: P (predator),
V (victim), N (normal). Per-conversation softmax scores are averaged per
author; the decision rule flags, for each suspicious conversation, the
participant with the highest averaged P score, and only when that author's
own predicted class is P. Ties break conservatively (N over V over P, and
no flag on an exact P-score tie), so equality never creates a predator.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core_math import LOG_EPS, init_uniform, make_optimizer, row_softmax, softmax
from .errors import NumericError, ShapeError, UsageError

CLASSES = ("P", "V", "N")
DEFAULT_MIN_FEATURE_FREQ = 5


@dataclass
class SentimentScore:
    """Probability triple over (predator, victim, normal)."""

    p: float
    v: float
    n: float

    def __post_init__(self):
        total = self.p + self.v + self.n
        if not (np.isfinite(total) and abs(total - 1.0) <= 1e-9):
            raise UsageError(f"sentiment score does not sum to 1: {self}")
        for value in (self.p, self.v, self.n):
            if not 0.0 <= value <= 1.0:
                raise UsageError(f"sentiment score outside [0, 1]: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.v, self.n], dtype=np.float64)

    def argmax_class(self) -> str:
        best = max(self.n, self.v, self.p)
        if self.n == best:       # conservative tie order: N, then V, then P
            return "N"
        if self.v == best:
            return "V"
        return "P"


@dataclass
class AuthorVerdict:
    author: str
    score: SentimentScore
    predicted_class: str = field(init=False)
    flagged_predator: bool = False

    def __post_init__(self):
        self.predicted_class = self.score.argmax_class()


@dataclass
class AuthorUnit:
    """One author's lines within one conversation, the training unit."""

    author: str
    conversation_id: str
    lines: list[list[str]]
    label: str | None = None


def unit_features(lines, bigrams: bool = True) -> list[str]:
    """Unigrams plus adjacent bigrams (within a line), with multiplicity."""
    feats: list[str] = []
    for line in lines:
        feats.extend(line)
        if bigrams:
            feats.extend(f"{a} {b}" for a, b in zip(line, line[1:]))
    return feats


def build_feature_vocab(units, min_freq: int = DEFAULT_MIN_FEATURE_FREQ,
                        bigrams: bool = True) -> list[str]:
    """Features seen at least min_freq times across units, ordered by count
    descending then lexicographically."""
    counts: Counter = Counter()
    for unit in units:
        counts.update(unit_features(unit.lines, bigrams))
    kept = [f for f, c in counts.items() if c >= min_freq]
    return sorted(kept, key=lambda f: (-counts[f], f))


class ShallowModel:
    def __init__(self, features: list[str], embedding: np.ndarray,
                 class_w: np.ndarray, class_b: np.ndarray,
                 bigrams: bool = True):
        self.features = list(features)
        self.feature_index = {f: i for i, f in enumerate(self.features)}
        self.embedding = embedding
        self.class_w = class_w
        self.class_b = class_b
        self.bigrams = bigrams
        self.validate()

    @classmethod
    def create(cls, rng, features, k: int, bigrams: bool = True,
               dtype=np.float32) -> "ShallowModel":
        embedding = init_uniform(rng, len(features), k, fan_in=k, dtype=dtype)
        class_w = init_uniform(rng, k, len(CLASSES), fan_in=k, dtype=dtype)
        class_b = np.zeros(len(CLASSES), dtype=dtype)
        return cls(features, embedding, class_w, class_b, bigrams=bigrams)

    def validate(self) -> None:
        if self.embedding.shape[0] != len(self.features):
            raise ShapeError(f"embedding rows {self.embedding.shape[0]} != "
                             f"feature count {len(self.features)}")
        k = self.embedding.shape[1]
        if self.class_w.shape != (k, len(CLASSES)):
            raise ShapeError(f"class weights {self.class_w.shape}, expected "
                             f"{(k, len(CLASSES))}")
        if self.class_b.shape != (len(CLASSES),):
            raise ShapeError(f"class bias {self.class_b.shape}, expected "
                             f"{(len(CLASSES),)}")

    @property
    def k(self) -> int:
        return self.embedding.shape[1]

    @property
    def dtype(self):
        return self.embedding.dtype

    def param_list(self) -> list[np.ndarray]:
        return [self.embedding, self.class_w, self.class_b]

    def astype(self, dtype) -> "ShallowModel":
        return ShallowModel(self.features, self.embedding.astype(dtype),
                            self.class_w.astype(dtype),
                            self.class_b.astype(dtype), bigrams=self.bigrams)

    def feature_ids(self, lines) -> list[int]:
        idx = self.feature_index
        return [idx[f] for f in unit_features(lines, self.bigrams) if f in idx]


def featurize(model: ShallowModel, lines) -> np.ndarray:
    """Mean embedding over in-vocabulary feature occurrences; the zero
    vector when every feature is out of vocabulary."""
    if not any(line for line in lines):
        raise UsageError("featurize: no tokens")
    ids = model.feature_ids(lines)
    if not ids:
        return np.zeros(model.k, dtype=model.dtype)
    return model.embedding[ids].mean(axis=0)


def score(model: ShallowModel, features: np.ndarray) -> SentimentScore:
    logits = (features.astype(np.float64) @ model.class_w.astype(np.float64)
              + model.class_b.astype(np.float64))
    probs = softmax(logits)
    return SentimentScore(p=float(probs[0]), v=float(probs[1]),
                          n=float(probs[2]))


@dataclass
class AuthorTrainConfig:
    k: int = 16
    epochs: int = 8
    lr: float = 0.1
    optimizer: str = "sgd"
    clip_norm: float = 5.0
    batch_size: int = 32
    min_feature_freq: int = DEFAULT_MIN_FEATURE_FREQ
    bigrams: bool = True
    balance: bool = True


def _unit_loss_and_grads(model: ShallowModel, units, cached_ids):
    """Mean 3-class cross-entropy over units and grads for
    [embedding, class_w, class_b]."""
    d_emb = np.zeros_like(model.embedding)
    d_w = np.zeros_like(model.class_w)
    d_b = np.zeros_like(model.class_b)
    total = 0.0
    scale = 1.0 / len(units)
    for unit, ids in zip(units, cached_ids):
        if ids:
            x = model.embedding[ids].mean(axis=0)
        else:
            x = np.zeros(model.k, dtype=model.dtype)
        logits = x @ model.class_w + model.class_b
        probs = row_softmax(logits[None, :])[0]
        target = CLASSES.index(unit.label)
        total += -float(np.log(max(float(probs[target]), LOG_EPS)))
        d_logits = probs.copy()
        d_logits[target] -= 1.0
        d_logits *= scale
        d_w += np.outer(x, d_logits)
        d_b += d_logits
        if ids:
            dx = model.class_w @ d_logits
            np.add.at(d_emb, ids, dx / len(ids))
    return total * scale, [d_emb, d_w, d_b]


def training_loss_and_grads(model: ShallowModel, units):
    """Gradient-check entry point over labeled units."""
    units = list(units)
    cached = [model.feature_ids(u.lines) for u in units]
    return _unit_loss_and_grads(model, units, cached)


@dataclass
class AuthorEpochRecord:
    epoch: int
    loss: float
    train_accuracy: float

    def format_line(self) -> str:
        return (f"epoch={self.epoch} loss={self.loss:.6f} "
                f"acc={self.train_accuracy:.4f}")


def train_author(model: ShallowModel, units, config: AuthorTrainConfig, rng):
    """Minimize 3-class cross-entropy over (author, conversation) units.

    All three classes must be present. With balance on, each epoch
    oversamples every class to the majority count. Returns (model, records).
    """
    units = list(units)
    if not units:
        raise UsageError("train_author: no training units")
    present = {u.label for u in units}
    missing = [c for c in CLASSES if c not in present]
    if missing:
        raise UsageError(f"train_author: classes missing from training data: "
                         f"{missing}")
    cached = [model.feature_ids(u.lines) for u in units]
    records: list[AuthorEpochRecord] = []
    if config.epochs == 0:
        return model, records
    optimizer = make_optimizer(config.optimizer, config.lr, config.clip_norm)
    params = model.param_list()
    by_class = {c: [i for i, u in enumerate(units) if u.label == c]
                for c in CLASSES}
    for epoch in range(1, config.epochs + 1):
        if config.balance:
            majority = max(len(v) for v in by_class.values())
            pool: list[int] = []
            for c in CLASSES:
                members = by_class[c]
                picks = rng.integers(0, len(members), size=majority)
                pool.extend(members[int(i)] for i in picks)
        else:
            pool = list(range(len(units)))
        order = rng.permutation(len(pool))
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = [pool[i] for i in order[start:start + config.batch_size]]
            loss, grads = _unit_loss_and_grads(model, [units[i] for i in idx],
                                               [cached[i] for i in idx])
            if not np.isfinite(loss):
                raise NumericError(f"train_author: non-finite loss at epoch "
                                   f"{epoch}")
            optimizer.step(params, grads)
            epoch_loss += loss
            n_batches += 1
        correct = 0
        for unit, ids in zip(units, cached):
            x = (model.embedding[ids].mean(axis=0) if ids
                 else np.zeros(model.k, dtype=model.dtype))
            predicted = score(model, x).argmax_class()
            correct += predicted == unit.label
        records.append(AuthorEpochRecord(epoch, epoch_loss / n_batches,
                                         correct / len(units)))
    return model, records


def average_author_scores(scores) -> SentimentScore:
    """Component-wise mean, renormalized to absorb rounding."""
    scores = list(scores)
    if not scores:
        raise UsageError("average_author_scores: no scores")
    mean = np.mean([s.as_array() for s in scores], axis=0)
    mean = mean / mean.sum()
    return SentimentScore(p=float(mean[0]), v=float(mean[1]),
                          n=float(mean[2]))


@dataclass
class IdentifyResult:
    flagged: set[str]
    anomalies: list[str]


def identify_predators(suspicious_conversation_ids, verdicts,
                       conversations) -> IdentifyResult:
    """Flag, per suspicious conversation, the participant with the highest
    averaged P score, and only when that author's predicted class is P
    (both classifiers must agree). At most one author per conversation; an
    exact top-P tie flags nobody."""
    conv_by_id = {c.id: c for c in conversations}
    flagged: set[str] = set()
    anomalies: list[str] = []
    for conv_id in sorted(set(suspicious_conversation_ids)):
        conv = conv_by_id.get(conv_id)
        if conv is None:
            anomalies.append(f"suspicious conversation {conv_id!r} not found")
            continue
        scoreable = [a for a in conv.authors() if a in verdicts]
        if not scoreable:
            anomalies.append(f"conversation {conv_id!r} has no scoreable "
                             "participants")
            continue
        top_p = max(verdicts[a].score.p for a in scoreable)
        top_authors = [a for a in scoreable if verdicts[a].score.p == top_p]
        if len(top_authors) != 1:
            continue
        candidate = top_authors[0]
        if verdicts[candidate].predicted_class == "P":
            flagged.add(candidate)
    return IdentifyResult(flagged=flagged, anomalies=anomalies)
