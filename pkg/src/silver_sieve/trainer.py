"""Linear softmax detector trained with cross-entropy, negative learning (NL)
or iteratively weighted negative learning (IWNL).

IWNL keeps one weight per class. Weights start at ``N / c_i`` from the silver
label counts and, after every epoch, are multiplied by
``exp(1 - c_i / mean(c))`` where ``c_i`` counts the samples the model now
predicts as class ``i``. Under-predicted classes therefore gain weight.

Where the weight lands is set by ``TrainConfig.weight_target``:

``"silver"`` (default)
    the whole negative-learning term of a sample is scaled by the weight of
    its silver class, so samples of under-predicted classes count for more.
``"complementary"``
    each complementary-label term is scaled by the weight of the
    complementary class itself. This suppresses exactly the classes that are
    already under-predicted and, on imbalanced data, drives the detector to
    predict a single class; it is kept for comparison.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .dataset import SilverDataset, class_counts
from .errors import ContractError, TrainingError
from .seeding import rng_for

log = logging.getLogger(__name__)

LOSS_KINDS = ("ce", "nl", "iwnl")
WEIGHT_TARGETS = ("silver", "complementary")


@dataclass
class LinearSoftmaxModel:
    W: np.ndarray
    b: np.ndarray

    @classmethod
    def zeros(cls, num_classes: int, feature_dim: int) -> "LinearSoftmaxModel":
        return cls(np.zeros((num_classes, feature_dim)), np.zeros(num_classes))

    def __post_init__(self):
        self.W = np.array(self.W, dtype=np.float64)
        self.b = np.array(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ContractError(f"shape mismatch: W {self.W.shape}, b {self.b.shape}")

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    def copy(self) -> "LinearSoftmaxModel":
        return LinearSoftmaxModel(self.W.copy(), self.b.copy())

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return kernels.softmax_rows(np.atleast_2d(x) @ self.W.T + self.b)


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "iwnl"
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 32
    n_complementary: int | None = None  # None: one per class, as in the reference setup
    weight_decay: float = 0.0
    weight_clamp: tuple[float, float] = (1e-6, 1e8)
    weight_target: str = "silver"
    seed: int = 0

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ContractError(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if self.weight_target not in WEIGHT_TARGETS:
            raise ContractError(f"weight_target must be one of {WEIGHT_TARGETS}")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ContractError("learning_rate, epochs and batch_size must be positive")
        if self.n_complementary is not None and self.n_complementary < 1:
            raise ContractError("n_complementary must be >= 1")
        if self.weight_decay < 0:
            raise ContractError("weight_decay must be non-negative")
        lo, hi = self.weight_clamp
        if not 0 < lo < hi:
            raise ContractError("weight_clamp needs 0 < lo < hi")

    def to_json(self) -> dict:
        return {
            "loss_kind": self.loss_kind,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "n_complementary": self.n_complementary,
            "weight_decay": self.weight_decay,
            "weight_clamp": list(self.weight_clamp),
            "weight_target": self.weight_target,
            "seed": self.seed,
        }


@dataclass
class ClassWeights:
    w: np.ndarray
    epoch: int = 0

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if np.any(self.w <= 0) or not np.all(np.isfinite(self.w)):
            raise ContractError("class weights must be positive and finite")


@dataclass
class EpochCounts:
    c: np.ndarray
    epoch: int = 0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.int64)
        if np.any(self.c < 0):
            raise ContractError("class counts must be non-negative")

    @property
    def mean(self) -> float:
        return float(self.c.sum()) / len(self.c)


@dataclass(frozen=True)
class ConfidenceRecord:
    id: int
    confidence: float
    predicted: int

    def to_json(self, names: Sequence[str] | None = None) -> dict:
        pred = names[self.predicted] if names is not None else self.predicted
        return {"id": self.id, "confidence": self.confidence, "predicted": pred}


# ---------------------------------------------------------------------------
# forward pass and losses


def softmax_forward(model: LinearSoftmaxModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.shape[-1] != model.W.shape[1]:
        raise ContractError(f"expected {model.W.shape[1]} features, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite input features")
    p = model.predict_proba(x)
    return p[0] if x.ndim == 1 else p


def sample_complementary_labels(silver_label: int, num_classes: int, n_c: int, rng: np.random.Generator) -> np.ndarray:
    """``n_c`` draws, with replacement, uniform over every class except ``silver_label``."""
    if num_classes < 2:
        raise ContractError("complementary labels need at least two classes")
    draws = rng.integers(0, num_classes - 1, size=n_c)
    return draws + (draws >= silver_label)


def complementary_batch(silver: np.ndarray, num_classes: int, n_c: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorised ``sample_complementary_labels`` for every sample, shape (N, n_c)."""
    if num_classes < 2:
        raise ContractError("complementary labels need at least two classes")
    draws = rng.integers(0, num_classes - 1, size=(len(silver), n_c))
    return draws + (draws >= silver[:, None])


def complementary_counts(comp: np.ndarray, num_classes: int) -> np.ndarray:
    """(N, n_c) label draws -> (N, K) multiplicity matrix."""
    out = np.zeros((comp.shape[0], num_classes))
    np.add.at(out, (np.repeat(np.arange(comp.shape[0]), comp.shape[1]), comp.ravel()), 1.0)
    return out


def _log_one_minus(p):
    return np.log(np.maximum(1.0 - np.asarray(p, dtype=np.float64), kernels.EPS))


def nl_loss(p, complementary) -> float:
    comp = np.asarray(complementary, dtype=np.int64)
    if comp.size == 0:
        raise ContractError("complementary label set is empty")
    return float(-_log_one_minus(np.asarray(p)[comp]).sum())


def _weight_vector(weights) -> np.ndarray:
    return weights.w if isinstance(weights, ClassWeights) else np.asarray(weights, dtype=np.float64)


def iwnl_loss(p, complementary, weights, silver_label: int | None = None) -> float:
    """Weighted NL loss of one sample.

    Without ``silver_label`` every complementary term carries the weight of
    its own class; with it, all terms carry the silver class's weight.
    """
    comp = np.asarray(complementary, dtype=np.int64)
    if comp.size == 0:
        raise ContractError("complementary label set is empty")
    w = _weight_vector(weights)
    terms = _log_one_minus(np.asarray(p)[comp])
    if silver_label is not None:
        return float(-w[silver_label] * terms.sum())
    return float(-(w[comp] * terms).sum())


def weighted_coefficients(counts: np.ndarray, weights, silver: np.ndarray, target: str) -> np.ndarray:
    """Scale a (N, K) complementary multiplicity matrix by the class weights."""
    w = _weight_vector(weights)
    if target == "silver":
        return counts * w[silver][:, None]
    if target == "complementary":
        return counts * w
    raise ContractError(f"unknown weight target {target!r}")


def iwnl_initial_weights(counts, clamp: tuple[float, float] = (1e-6, 1e8)) -> ClassWeights:
    c = np.asarray(counts, dtype=np.float64)
    if c.size == 0 or not np.any(c > 0):
        raise ContractError("initial class counts are all zero")
    c = np.maximum(c, 1.0)
    return ClassWeights(np.clip(c.sum() / c, *clamp), epoch=0)


def iwnl_update_weights(prev: ClassWeights, counts: EpochCounts, clamp: tuple[float, float] = (1e-6, 1e8)) -> ClassWeights:
    c = counts.c.astype(np.float64)
    if c.shape != prev.w.shape:
        raise ContractError("weights and counts differ in length")
    mean = c.sum() / len(c)
    if mean <= 0:
        raise ContractError("epoch counts are all zero")
    return ClassWeights(np.clip(prev.w * np.exp(1.0 - c / mean), *clamp), epoch=prev.epoch + 1)


# ---------------------------------------------------------------------------
# gradients


def _coefficients(kind, y, complementary, weights, num_classes, target):
    if kind == "ce":
        return kernels.CE, np.zeros((len(y), num_classes))
    if complementary is None:
        raise ContractError(f"{kind} loss needs complementary labels")
    a = complementary_counts(np.atleast_2d(np.asarray(complementary, dtype=np.int64)), num_classes)
    if kind == "iwnl":
        if weights is None:
            raise ContractError("iwnl loss needs class weights")
        a = weighted_coefficients(a, weights, y, target)
    return kernels.NEG, a


def batch_loss(model, x, y, kind, complementary=None, weights=None, weight_decay=0.0, weight_target="silver") -> float:
    """Mean per-sample loss plus ``weight_decay / 2 * ||W||^2``.

    This is the objective whose gradient ``loss_gradient`` returns.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    p = model.predict_proba(x)
    if kind == "ce":
        per = -np.log(p[np.arange(len(y)), y])
    else:
        _, a = _coefficients(kind, y, complementary, weights, model.num_classes, weight_target)
        per = -(a * _log_one_minus(p)).sum(axis=1)
    return float(per.mean() + 0.5 * weight_decay * np.sum(model.W**2))


def loss_gradient(model, x, y, kind, complementary=None, weights=None, weight_decay=0.0, weight_target="silver"):
    """Mean gradient over the batch as ``(dW, db)``; ``dW`` includes ``weight_decay * W``."""
    if kind not in LOSS_KINDS:
        raise ContractError(f"unknown loss kind {kind!r}")
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    code, a = _coefficients(kind, y, complementary, weights, model.num_classes, weight_target)
    gw, gb = kernels.batch_grad(x, y, a, model.W, model.b, code)
    return gw + weight_decay * model.W, gb


# ---------------------------------------------------------------------------
# training loop


@dataclass
class DetectorResult:
    model: LinearSoftmaxModel
    records: list[ConfidenceRecord]
    weight_history: list[ClassWeights] = field(default_factory=list)
    count_history: list[EpochCounts] = field(default_factory=list)

    def history_json(self) -> list[dict]:
        out = []
        for i, w in enumerate(self.weight_history):
            entry = {"epoch": w.epoch, "weights": w.w.tolist()}
            if i > 0:
                entry["predicted_counts"] = self.count_history[i - 1].c.tolist()
            out.append(entry)
        return out


CountsHook = Callable[[int, np.ndarray], np.ndarray]


def check_finite(model: LinearSoftmaxModel, x: np.ndarray, y: np.ndarray, epoch: int) -> None:
    """Raise ``TrainingError`` once parameters or training logits stop being finite."""
    if not (np.all(np.isfinite(model.W)) and np.all(np.isfinite(model.b))):
        raise TrainingError("parameters diverged to non-finite values", epoch)
    with np.errstate(over="ignore", invalid="ignore"):
        losses = kernels.ce_losses(x, y, model.W, model.b)
    # saturated parameters can stay finite while the loss overflows
    if not np.all(np.isfinite(losses)):
        raise TrainingError("training loss overflowed; parameters diverged", epoch)


def train_detector(
    ds: SilverDataset,
    cfg: TrainConfig,
    model: LinearSoftmaxModel | None = None,
    counts_hook: CountsHook | None = None,
) -> DetectorResult:
    """Train on every silver label and score each sample.

    Each epoch resamples the complementary labels, runs one shuffled pass of
    minibatch descent, counts full-dataset argmax predictions and (for IWNL)
    updates the class weights from those counts. ``counts_hook(epoch,
    counts)`` may replace the predicted counts before the update.

    The confidence of a sample is the final probability of its silver label.
    """
    k = ds.num_classes
    x = np.ascontiguousarray(ds.features_matrix())
    y = ds.silver_array()
    n = len(y)
    if n < k:
        raise ContractError(f"need at least one sample per class (N={n}, classes={k})")
    if cfg.loss_kind != "ce" and k < 2:
        raise ContractError("negative learning needs at least two classes")
    model = model.copy() if model is not None else LinearSoftmaxModel.zeros(k, ds.feature_dim)
    n_c = cfg.n_complementary or k
    comp_rng = rng_for(cfg.seed, "trainer.complementary")
    order_rng = rng_for(cfg.seed, "trainer.order")

    weights = iwnl_initial_weights(class_counts(y, k), cfg.weight_clamp)
    weight_history = [weights]
    count_history: list[EpochCounts] = []
    code = kernels.CE if cfg.loss_kind == "ce" else kernels.NEG
    a = np.zeros((n, k))

    for epoch in range(1, cfg.epochs + 1):
        if code == kernels.NEG:
            a = complementary_counts(complementary_batch(y, k, n_c, comp_rng), k)
            if cfg.loss_kind == "iwnl":
                a = weighted_coefficients(a, weights, y, cfg.weight_target)
        order = order_rng.permutation(n)
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
            kernels.train_epoch(x, y, a, model.W, model.b, order, cfg.batch_size, cfg.learning_rate, cfg.weight_decay, code)
        check_finite(model, x, y, epoch)
        with np.errstate(over="ignore"):  # saturated but finite logits
            p = model.predict_proba(x)
        counts = class_counts(p.argmax(axis=1), k)
        if counts_hook is not None:
            counts = np.asarray(counts_hook(epoch, counts), dtype=np.int64)
        count_history.append(EpochCounts(counts, epoch))
        if cfg.loss_kind == "iwnl":
            weights = iwnl_update_weights(weights, count_history[-1], cfg.weight_clamp)
            weight_history.append(weights)
        log.debug("epoch %d counts %s", epoch, counts.tolist())

    p = model.predict_proba(x)
    if not np.all(np.isfinite(p)):
        raise TrainingError("non-finite probabilities", cfg.epochs)
    conf = p[np.arange(n), y]
    pred = p.argmax(axis=1)
    records = [ConfidenceRecord(int(i), float(c), int(q)) for i, c, q in zip(ds.ids, conf, pred)]
    return DetectorResult(model, records, weight_history, count_history)


# ---------------------------------------------------------------------------
# serialization


def save_records(records: Sequence[ConfidenceRecord], path, names: Sequence[str] | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(names)) + "\n")


def load_records(path, names: Sequence[str] | None = None) -> list[ConfidenceRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            pred = obj["predicted"]
            if isinstance(pred, str):
                if names is None:
                    raise ContractError(f"line {lineno}: label name {pred!r} needs a label space")
                pred = list(names).index(pred)
            conf = float(obj["confidence"])
            if not (0.0 <= conf <= 1.0) or math.isnan(conf):
                raise ContractError(f"line {lineno}: confidence {conf} outside [0, 1]")
            out.append(ConfidenceRecord(int(obj["id"]), conf, int(pred)))
    return out
