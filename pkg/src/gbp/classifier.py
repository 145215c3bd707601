"""Small softmax classifier trained on embedding rows.

Plain multinomial logistic regression, or one ReLU hidden layer when
``hidden > 0``. Optimized with mini-batch SGD + momentum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .errors import FormatError, ValidationError


@dataclass
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 0.1
    max_epochs: int = 200
    l2: float = 0.0
    hidden: int = 0
    dropout: float = 0.0
    momentum: float = 0.9
    patience: int = 50
    standardize: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValidationError("batch size must be positive")
        if not self.learning_rate > 0:
            raise ValidationError("learning rate must be positive")
        if not 0 <= self.dropout < 1:
            raise ValidationError("dropout must lie in [0, 1)")
        if self.hidden < 0 or self.max_epochs < 0:
            raise ValidationError("hidden size and epochs must be non-negative")


@dataclass
class LabeledSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    labels: dict  # row id -> class
    num_classes: int

    def __post_init__(self):
        self.train = np.asarray(self.train, dtype=np.int64)
        self.val = np.asarray(self.val, dtype=np.int64)
        self.test = np.asarray(self.test, dtype=np.int64)
        sets = [set(self.train.tolist()), set(self.val.tolist()), set(self.test.tolist())]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ValidationError("splits overlap")
        for ids in sets:
            for i in ids:
                if i not in self.labels:
                    raise ValidationError(f"row {i} has no label")
                if not 0 <= self.labels[i] < self.num_classes:
                    raise ValidationError(f"label {self.labels[i]} of row {i} out of range")

    def y(self, ids) -> np.ndarray:
        return np.array([self.labels[int(i)] for i in ids], dtype=np.int64)


@dataclass
class Model:
    params: dict
    num_classes: int
    history: list = field(default_factory=list)
    shift: np.ndarray | None = None
    scale: np.ndarray | None = None

    def prepare(self, X: np.ndarray) -> np.ndarray:
        if self.shift is None:
            return X
        return (X - self.shift) / self.scale

    @property
    def hidden(self) -> int:
        return self.params["W1"].shape[1] if "W1" in self.params else 0


def init_params(n_in: int, n_out: int, hidden: int, rng: np.random.Generator) -> dict:
    if hidden:
        return {
            "W1": rng.normal(0, np.sqrt(2.0 / n_in), (n_in, hidden)),
            "b1": np.zeros(hidden),
            "W2": rng.normal(0, np.sqrt(1.0 / hidden), (hidden, n_out)),
            "b2": np.zeros(n_out),
        }
    return {"W": np.zeros((n_in, n_out)), "b": np.zeros(n_out)}


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(params, X, keep_mask=None):
    if "W" in params:
        return X @ params["W"] + params["b"], None
    pre = X @ params["W1"] + params["b1"]
    h = np.maximum(pre, 0.0)
    if keep_mask is not None:
        h = h * keep_mask
    return h @ params["W2"] + params["b2"], (pre, h)


def loss_and_grad(params: dict, X: np.ndarray, y: np.ndarray, l2: float = 0.0,
                  keep_mask=None):
    """Mean cross-entropy (+ ``l2/2 * ||W||^2`` on weight matrices) and its gradient."""
    logits, cache = _forward(params, X, keep_mask)
    probs = softmax(logits)
    n = len(y)
    loss = -np.mean(np.log(probs[np.arange(n), y] + 1e-300))
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = {}
    if cache is None:
        grads["W"] = X.T @ delta
        grads["b"] = delta.sum(axis=0)
    else:
        pre, h = cache
        grads["W2"] = h.T @ delta
        grads["b2"] = delta.sum(axis=0)
        dh = delta @ params["W2"].T
        if keep_mask is not None:
            dh = dh * keep_mask
        dpre = dh * (pre > 0)
        grads["W1"] = X.T @ dpre
        grads["b1"] = dpre.sum(axis=0)
    if l2:
        for name in params:
            if name.startswith("W"):
                loss += 0.5 * l2 * float(np.sum(params[name] ** 2))
                grads[name] = grads[name] + l2 * params[name]
    return loss, grads


def _evaluate(params, X, y, l2):
    loss, _ = loss_and_grad(params, X, y, l2)
    acc = float(np.mean(np.argmax(_forward(params, X)[0], axis=1) == y))
    return float(loss), acc


def train(features: np.ndarray, split: LabeledSplit, cfg: TrainConfig) -> Model:
    """Fit on ``features[split.train]``; rows of ``features`` are indexed by row id.

    Early-stops after ``cfg.patience`` epochs without validation-loss
    improvement (training loss when there is no validation split) and
    restores the best parameters.
    """
    if len(split.train) == 0:
        raise ValidationError("empty training split")
    rng = np.random.default_rng(cfg.seed)
    features = np.asarray(features, dtype=np.float64)
    model = Model({}, split.num_classes)
    if cfg.standardize:
        model.shift = features[split.train].mean(axis=0)
        std = features[split.train].std(axis=0)
        model.scale = np.where(std > 0, std, 1.0)
    features = model.prepare(features)
    Xtr, ytr = features[split.train], split.y(split.train)
    has_val = len(split.val) > 0
    Xva, yva = (features[split.val], split.y(split.val)) if has_val else (Xtr, ytr)

    params = init_params(features.shape[1], split.num_classes, cfg.hidden, rng)
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    model.params = params
    model.history.append(_epoch_record(0, params, Xtr, ytr, Xva, yva, cfg.l2))
    best_loss, best_params, stale = model.history[0]["val_loss"], _copy(params), 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(ytr))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            mask = None
            if cfg.hidden and cfg.dropout:
                keep = 1.0 - cfg.dropout
                mask = (rng.random((len(batch), cfg.hidden)) < keep) / keep
            _, grads = loss_and_grad(params, Xtr[batch], ytr[batch], cfg.l2, mask)
            for k in params:
                velocity[k] = cfg.momentum * velocity[k] - cfg.learning_rate * grads[k]
                params[k] += velocity[k]
        rec = _epoch_record(epoch, params, Xtr, ytr, Xva, yva, cfg.l2)
        model.history.append(rec)
        if rec["val_loss"] < best_loss - 1e-12:
            best_loss, best_params, stale = rec["val_loss"], _copy(params), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.params = best_params
    return model


def _copy(params):
    return {k: v.copy() for k, v in params.items()}


def _epoch_record(epoch, params, Xtr, ytr, Xva, yva, l2):
    tl, ta = _evaluate(params, Xtr, ytr, l2)
    vl, va = _evaluate(params, Xva, yva, l2)
    return {"epoch": epoch, "train_loss": tl, "train_acc": ta, "val_loss": vl, "val_acc": va}


def predict(model: Model, features: np.ndarray, ids=None):
    """Predicted labels and softmax scores for ``features[ids]`` (all rows if None)."""
    X = features if ids is None else features[np.asarray(ids, dtype=np.int64)]
    X = model.prepare(np.asarray(X, dtype=np.float64))
    scores = softmax(_forward(model.params, X)[0])
    return np.argmax(scores, axis=1), scores


def accuracy(model: Model, features: np.ndarray, split: LabeledSplit, ids) -> float:
    if len(ids) == 0:
        return float("nan")
    labels, _ = predict(model, features, ids)
    return float(np.mean(labels == split.y(ids)))


# -- label / split files ------------------------------------------------------

def load_labels(stream: IO[str] | Iterable[str]) -> dict:
    """``row_id<TAB>class`` lines."""
    labels = {}
    for lineno, line in enumerate(stream, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) != 2:
            raise FormatError(f"line {lineno}: expected 'row_id<TAB>class'")
        try:
            labels[int(parts[0])] = int(parts[1])
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer field") from None
    return labels


def load_ids(stream: IO[str] | Iterable[str]) -> np.ndarray:
    ids = []
    for lineno, line in enumerate(stream, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            ids.append(int(text))
        except ValueError:
            raise FormatError(f"line {lineno}: bad row id {text!r}") from None
    return np.array(ids, dtype=np.int64)
