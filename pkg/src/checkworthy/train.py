"""Mini-batch cross-entropy fine-tuning with Adam, and a small grid search."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as M
from .corpus import Dataset
from .errors import ConfigError, ContractError, TrainingError
from .rng import StableRandom, derive_seed

log = logging.getLogger(__name__)

# learning rates reported for the two fine-tuning setups
LR_ENGLISH = 1.5e-5
LR_ARABIC = 2e-5
LR_DESK = 1e-3


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2
    batch_size: int = 32
    learning_rate: float = LR_DESK
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    pos_p: float
    pos_r: float
    pos_f1: float
    neg_p: float
    neg_r: float
    neg_f1: float


HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "val_acc",
                   "pos_P", "pos_R", "pos_F1", "neg_P", "neg_R", "neg_F1")


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)

    def to_tsv(self):
        rows = ["\t".join(HISTORY_COLUMNS)]
        for r in self.epochs:
            vals = [r.train_loss, r.val_loss, r.val_acc, r.pos_p, r.pos_r, r.pos_f1,
                    r.neg_p, r.neg_r, r.neg_f1]
            rows.append("\t".join([str(r.epoch)] + [f"{v:.6f}" for v in vals]))
        return "\n".join(rows) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_tsv(), encoding="utf-8")

    @property
    def final(self):
        return self.epochs[-1]


def cross_entropy(logits, label):
    """Loss ``-log softmax(logits)[label]`` and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=float)
    m = logits.max()
    lse = m + math.log(np.exp(logits - m).sum())
    grad = np.exp(logits - lse)
    grad[label] -= 1.0
    return lse - logits[label], grad


def batch_cross_entropy(logits, labels):
    """Mean loss over a batch and dL/dlogits."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    n = len(labels)
    loss = float(np.mean(lse - logits[np.arange(n), labels]))
    grad = np.exp(logits - lse[:, None])
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def adam_step(params, grads, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update, in place. Returns ``(params, state)``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter group {name!r}")
    state.t += 1
    b1, b2, eps, lr = config.adam_beta1, config.adam_beta2, config.adam_epsilon, config.learning_rate
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


def encode_for_model(encoder, text, max_seq_len):
    """Head-truncate to ``max_seq_len - 2`` subwords and wrap in start/end tokens."""
    vocab = encoder.vocab
    body = encoder.encode(text).ids[: max_seq_len - 2]
    return [vocab.bos_id] + body + [vocab.eos_id]


def class_report(labels, preds):
    """Accuracy plus precision/recall/F1 for the positive and negative class."""
    labels = np.asarray(labels)
    preds = np.asarray(preds)
    out = {"acc": float(np.mean(labels == preds)) if len(labels) else 0.0}
    for cls, key in ((1, "pos"), (0, "neg")):
        tp = int(np.sum((preds == cls) & (labels == cls)))
        fp = int(np.sum((preds == cls) & (labels != cls)))
        fn = int(np.sum((preds != cls) & (labels == cls)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        out[key] = (p, r, 2 * p * r / (p + r) if p + r else 0.0)
    return out


def evaluate(weights, mcfg, sequences, labels, pad_id):
    if not sequences:
        return 0.0, class_report([], [])
    logits = M.predict_logits(sequences, weights, mcfg, pad_id)
    loss, _ = batch_cross_entropy(logits, labels)
    preds = (logits[:, 1] > logits[:, 0]).astype(int)
    return loss, class_report(labels, preds)


def fine_tune(weights, train_set: Dataset, val_set: Dataset, encoder, config: TrainConfig,
              model_config: M.EncoderConfig, callback=None):
    """Train a copy of ``weights``; returns ``(trained_weights, history)``.

    Deterministic given inputs and ``config.seed``: epoch shuffles use
    :class:`StableRandom`, dropout a PCG64 generator seeded the same way.
    """
    if len(train_set) == 0:
        raise ContractError("training set is empty")
    for ds in (train_set, val_set):
        if any(t.label is None for t in ds):
            raise ContractError(f"dataset {ds.name!r} is not fully labeled")
    if encoder.vocab_size != model_config.vocab_size:
        raise ConfigError(
            f"tokenizer vocabulary has {encoder.vocab_size} entries, model expects {model_config.vocab_size}"
        )
    M.check_weights(weights, model_config)
    params = {k: v.copy() for k, v in weights.items()}
    state = AdamState.zeros_like(params)
    pad = encoder.vocab.pad_id
    L = model_config.max_seq_len
    train_seqs = [encode_for_model(encoder, t.text, L) for t in train_set]
    train_labels = np.array([t.label for t in train_set])
    val_seqs = [encode_for_model(encoder, t.text, L) for t in val_set]
    val_labels = np.array([t.label for t in val_set])
    dropout_rng = np.random.default_rng(derive_seed(config.seed, 1))
    history = TrainHistory()

    for epoch in range(1, config.epochs + 1):
        order = StableRandom(derive_seed(config.seed, 2, epoch)).shuffle(range(len(train_seqs)))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            ids, mask = M.pad_batch([train_seqs[i] for i in idx], pad)
            _, logits, cache = M.forward_batch(ids, mask, params, model_config, M.TRAIN, dropout_rng)
            loss, dlogits = batch_cross_entropy(logits, train_labels[idx])
            grads = M.backward_batch(dlogits, params, model_config, cache)
            adam_step(params, grads, state, config)
            total += loss * len(idx)
        val_loss, rep = evaluate(params, model_config, val_seqs, val_labels, pad)
        rec = EpochRecord(epoch, total / len(order), val_loss, rep["acc"], *rep["pos"], *rep["neg"])
        history.epochs.append(rec)
        log.info("epoch %d train_loss %.4f val_loss %.4f val_acc %.4f pos_F1 %.4f",
                 epoch, rec.train_loss, rec.val_loss, rec.val_acc, rec.pos_f1)
        if callback is not None:
            callback(rec, params)
    return params, history


def training_accuracy(weights, dataset, encoder, model_config):
    seqs = [encode_for_model(encoder, t.text, model_config.max_seq_len) for t in dataset]
    _, rep = evaluate(weights, model_config, seqs, [t.label for t in dataset], encoder.vocab.pad_id)
    return rep["acc"]


def example_grid(seed=0, epochs=(2, 4), batch_sizes=(16, 32), learning_rates=(5e-4, 1e-3, 2e-3)):
    """Cartesian product of a few desk-scale settings; a starting point, not a tuned search space."""
    return [TrainConfig(epochs=e, batch_size=b, learning_rate=lr, seed=seed)
            for e, b, lr in itertools.product(epochs, batch_sizes, learning_rates)]


def grid_search(grid, train_set, val_set, model_factory, encoder):
    """Train one model per config from the same initial weights.

    ``model_factory()`` returns ``(weights, model_config)``. The winner has
    the highest final validation positive-class F1, then the lowest
    validation loss, then the earliest grid position.
    """
    grid = list(grid)
    if not grid:
        raise ContractError("grid search needs at least one configuration")
    init, mcfg = model_factory()
    histories = []
    for cfg in grid:
        _, hist = fine_tune(init, train_set, val_set, encoder, cfg, mcfg)
        histories.append(hist)
    best = min(
        range(len(grid)),
        key=lambda i: (-histories[i].final.pos_f1, histories[i].final.val_loss, i),
    )
    return grid[best], histories


