"""Suspicious-conversation detection: sentence-vector sequences through two
LSTM layers into a sigmoid head.

Conversations become sequences of sentence vectors (one per message), zero
padded and split into fixed-length chunks. In masked mode (default) the
head reads the hidden state at the last valid timestep so padding rows
cannot dilute the state; the unmasked variant reads the state after the
full padded chunk. A conversation is positive when any of its chunks
scores at or above the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_math import LOG_EPS, init_uniform, make_optimizer, sigmoid
from .errors import NumericError, ShapeError, UsageError
from .lstm import LstmLayerParams, backward_stack, forward_stack
from .metrics import ConfusionCounts, accuracy, precision_recall_f
from .language_model import LanguageModel, SentenceVector, sentence_vector
from .preprocessing import tokenize

DEFAULT_CHUNK_LEN = 100
DEFAULT_THRESHOLD = 0.5
_PROB_EPS = 1e-12  # keep reported probabilities strictly inside (0, 1)


@dataclass
class ConversationSequence:
    conversation_id: str
    vectors: list[SentenceVector]
    label: bool | None = None


@dataclass
class Chunk:
    conversation_id: str
    part_index: int
    matrix: np.ndarray        # (chunk_len, H); rows >= valid_len are zero
    valid_len: int
    label: bool | None = None


class ScdModel:
    def __init__(self, layer1: LstmLayerParams, layer2: LstmLayerParams,
                 head_w: np.ndarray, head_b: np.ndarray, masked: bool = True):
        self.layer1 = layer1
        self.layer2 = layer2
        self.head_w = head_w
        self.head_b = head_b
        self.masked = masked
        self.validate()

    @classmethod
    def create(cls, rng, input_dim: int, hidden_dim: int, use_bias: bool = True,
               masked: bool = True, dtype=np.float32) -> "ScdModel":
        layer1 = LstmLayerParams.init(rng, input_dim, hidden_dim,
                                      use_bias=use_bias, dtype=dtype)
        layer2 = LstmLayerParams.init(rng, hidden_dim, hidden_dim,
                                      use_bias=use_bias, dtype=dtype)
        head_w = init_uniform(rng, hidden_dim, 1, fan_in=hidden_dim,
                              dtype=dtype)[:, 0]
        head_b = np.zeros(1, dtype=dtype)
        return cls(layer1, layer2, head_w, head_b, masked=masked)

    def validate(self) -> None:
        h = self.layer2.hidden_dim
        if self.layer2.input_dim != self.layer1.hidden_dim:
            raise ShapeError("layer2 input dim does not match layer1 hidden dim")
        if self.head_w.shape != (h,):
            raise ShapeError(f"head weights {self.head_w.shape}, expected {(h,)}")
        if self.head_b.shape != (1,):
            raise ShapeError(f"head bias {self.head_b.shape}, expected (1,)")

    @property
    def input_dim(self) -> int:
        return self.layer1.input_dim

    @property
    def hidden_dim(self) -> int:
        return self.layer2.hidden_dim

    @property
    def dtype(self):
        return self.head_w.dtype

    def param_list(self) -> list[np.ndarray]:
        return (self.layer1.param_list() + self.layer2.param_list()
                + [self.head_w, self.head_b])

    def astype(self, dtype) -> "ScdModel":
        return ScdModel(self.layer1.astype(dtype), self.layer2.astype(dtype),
                        self.head_w.astype(dtype), self.head_b.astype(dtype),
                        masked=self.masked)

    def copy(self) -> "ScdModel":
        return ScdModel(self.layer1.copy(), self.layer2.copy(),
                        self.head_w.copy(), self.head_b.copy(),
                        masked=self.masked)


def vectorize_conversation(conv, lm: LanguageModel) -> ConversationSequence | None:
    """One sentence vector per message, in message order; None signals an
    empty conversation to skip (reported by the caller, not fatal)."""
    if not conv.messages:
        return None
    vectors = [sentence_vector(lm, tokenize(m.text)) for m in conv.messages]
    return ConversationSequence(conversation_id=conv.id, vectors=vectors)


def chunk_and_pad(seq: ConversationSequence,
                  chunk_len: int = DEFAULT_CHUNK_LEN) -> list[Chunk]:
    """Split into ceil(n/chunk_len) parts, the last zero-padded; every
    chunk inherits the conversation label."""
    if chunk_len < 1:
        raise UsageError(f"chunk_len must be >= 1, got {chunk_len}")
    n = len(seq.vectors)
    if n == 0:
        return []
    dim = seq.vectors[0].values.shape[0]
    dtype = seq.vectors[0].values.dtype
    chunks = []
    for part in range(math.ceil(n / chunk_len)):
        rows = seq.vectors[part * chunk_len:(part + 1) * chunk_len]
        matrix = np.zeros((chunk_len, dim), dtype=dtype)
        for i, vec in enumerate(rows):
            matrix[i] = vec.values
        chunks.append(Chunk(conversation_id=seq.conversation_id,
                            part_index=part, matrix=matrix,
                            valid_len=len(rows), label=seq.label))
    return chunks


def _final_states(model: ScdModel, chunks):
    """Top-layer hidden state read per chunk (masked: at valid_len - 1),
    plus the traces for backprop."""
    batch = np.stack([c.matrix for c in chunks]).astype(model.dtype, copy=False)
    if model.masked:
        # steps past the longest valid row are all-zero padding that the
        # masked read never touches; skip them
        t_eff = max(c.valid_len for c in chunks)
        batch = batch[:, :t_eff]
        rows = np.array([c.valid_len - 1 for c in chunks])
    else:
        rows = np.full(len(chunks), batch.shape[1] - 1)
    xs = np.ascontiguousarray(batch.transpose(1, 0, 2))
    traces = forward_stack(xs, [model.layer1, model.layer2])
    finals = traces[1].S[rows, np.arange(len(chunks)), :]
    return finals, rows, traces


def _chunk_probabilities(model: ScdModel, chunks) -> np.ndarray:
    finals, _, _ = _final_states(model, chunks)
    logits = finals.astype(np.float64) @ model.head_w.astype(np.float64) \
        + float(model.head_b[0])
    probs = sigmoid(logits)
    return np.clip(probs, _PROB_EPS, 1.0 - _PROB_EPS)


@dataclass
class ScdPrediction:
    conversation_id: str
    chunk_probs: list[float]
    max_prob: float
    verdict: bool


def predict_scd(model: ScdModel, chunks,
                threshold: float = DEFAULT_THRESHOLD) -> ScdPrediction:
    """Per-chunk sigmoid probabilities for one conversation; positive iff
    the max probability reaches the threshold."""
    chunks = list(chunks)
    if not chunks:
        raise UsageError("predict_scd: no chunks")
    ids = {c.conversation_id for c in chunks}
    if len(ids) != 1:
        raise UsageError(f"predict_scd: chunks from several conversations {ids}")
    probs = _chunk_probabilities(model, chunks)
    max_prob = float(probs.max())
    return ScdPrediction(conversation_id=chunks[0].conversation_id,
                         chunk_probs=[float(p) for p in probs],
                         max_prob=max_prob, verdict=max_prob >= threshold)


@dataclass
class ScdTrainConfig:
    hidden_dim: int = 200
    epochs: int = 10
    lr: float = 0.05
    optimizer: str = "sgd"
    clip_norm: float = 5.0
    batch_size: int = 32
    neg_ratio: float = 5.0
    threshold: float = DEFAULT_THRESHOLD
    use_bias: bool = True
    masked: bool = True


@dataclass
class ScdEpochRecord:
    epoch: int
    train: tuple
    val: tuple | None = None

    def format_line(self) -> str:
        acc, p, r, f1 = self.train
        line = (f"epoch={self.epoch} acc={acc:.4f} prec={_fmt(p)} "
                f"rec={_fmt(r)} f1={_fmt(f1)}")
        if self.val is not None:
            acc, p, r, f1 = self.val
            line += (f" val_acc={acc:.4f} val_prec={_fmt(p)} "
                     f"val_rec={_fmt(r)} val_f1={_fmt(f1)}")
        return line


def _fmt(x) -> str:
    return "nan" if x is None else f"{x:.4f}"


def _chunk_metrics(model, chunks, threshold):
    probs = _chunk_probabilities(model, chunks)
    predicted = probs >= threshold
    labels = np.array([bool(c.label) for c in chunks])
    tp = int(np.sum(predicted & labels))
    fp = int(np.sum(predicted & ~labels))
    fn = int(np.sum(~predicted & labels))
    tn = int(np.sum(~predicted & ~labels))
    counts = ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)
    prf = precision_recall_f(counts, 1.0)
    return (accuracy(counts), prf.precision, prf.recall, prf.f_beta)


def _bce_loss_and_grads(model: ScdModel, chunks):
    """Mean binary cross-entropy over chunks and gradients for
    model.param_list() order."""
    finals, rows, traces = _final_states(model, chunks)
    labels = np.array([1.0 if c.label else 0.0 for c in chunks],
                      dtype=model.dtype)
    logits = finals @ model.head_w + model.head_b[0]
    probs = sigmoid(logits)
    p64 = np.clip(probs.astype(np.float64), LOG_EPS, 1.0 - LOG_EPS)
    loss = float(-np.mean(np.where(labels > 0.5, np.log(p64),
                                   np.log1p(-p64))))
    d_logit = (probs - labels) / len(chunks)
    d_head_w = finals.T @ d_logit
    d_head_b = np.array([d_logit.sum()], dtype=model.dtype)
    d_finals = d_logit[:, None] * model.head_w[None, :]
    d_s = np.zeros_like(traces[1].S)
    d_s[rows, np.arange(len(chunks)), :] = d_finals
    layer_grads, _ = backward_stack(traces, d_s)
    grads = (layer_grads[0].param_list() + layer_grads[1].param_list()
             + [d_head_w, d_head_b])
    return loss, grads


def training_loss_and_grads(model: ScdModel, chunks):
    """Gradient-check entry point: one batch, loss plus analytic grads."""
    return _bce_loss_and_grads(model, list(chunks))


def train_scd(chunks, config: ScdTrainConfig, rng, val_chunks=None):
    """Train on labeled chunks, resampling negatives each epoch to the
    configured ratio; keeps the parameters from the best-F1 epoch
    (validation F1 when val_chunks given, else training F1).

    Returns (model, list of ScdEpochRecord).
    """
    chunks = list(chunks)
    pos = [c for c in chunks if c.label]
    neg = [c for c in chunks if not c.label]
    if not pos or not neg:
        raise UsageError("train_scd: need at least one positive and one "
                         "negative chunk")
    input_dim = chunks[0].matrix.shape[1]
    model = ScdModel.create(rng, input_dim, config.hidden_dim,
                            use_bias=config.use_bias, masked=config.masked)
    records: list[ScdEpochRecord] = []
    if config.epochs == 0:
        return model, records
    optimizer = make_optimizer(config.optimizer, config.lr, config.clip_norm)
    params = model.param_list()
    best_f1 = -1.0
    best_params = None
    for epoch in range(1, config.epochs + 1):
        n_neg = min(len(neg), int(round(config.neg_ratio * len(pos))))
        neg_pick = [neg[i] for i in rng.permutation(len(neg))[:n_neg]]
        epoch_set = pos + neg_pick
        order = rng.permutation(len(epoch_set))
        for start in range(0, len(order), config.batch_size):
            batch = [epoch_set[i] for i in order[start:start + config.batch_size]]
            loss, grads = _bce_loss_and_grads(model, batch)
            if not np.isfinite(loss):
                raise NumericError(f"train_scd: non-finite loss at epoch "
                                   f"{epoch} (lr={config.lr})")
            optimizer.step(params, grads)
        train_m = _chunk_metrics(model, chunks, config.threshold)
        val_m = None
        if val_chunks:
            val_m = _chunk_metrics(model, val_chunks, config.threshold)
        records.append(ScdEpochRecord(epoch, train_m, val_m))
        select = val_m if val_m is not None else train_m
        f1 = select[3] if select[3] is not None else -1.0
        if f1 > best_f1:
            best_f1 = f1
            best_params = [p.copy() for p in params]
    if best_params is not None:
        for p, best in zip(params, best_params):
            p[...] = best
    return model, records
