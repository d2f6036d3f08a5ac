"""Overfitting-to-underfitting (O2U) clean-data detection.

The classifier is first trained with cross-entropy at a constant rate, then
for ``rounds`` cycles of ``E`` epochs whose learning rate falls linearly from
``r_max`` to ``r_min``. After every cyclical epoch each sample's CE loss is
added to a ledger; samples with the smallest accumulated loss are taken as
clean.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import SilverDataset
from .errors import ContractError, TrainingError
from .selector import CORE, CleanSet, proportion_size
from .seeding import rng_for
from .trainer import ConfidenceRecord, LinearSoftmaxModel, check_finite


@dataclass(frozen=True)
class CyclicalSchedule:
    r_max: float = 0.1
    r_min: float = 0.001
    epochs_per_round: int = 5
    rounds: int = 1
    pretrain_epochs: int = 2
    pretrain_lr: float = 1e-2
    batch_size: int = 32

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ContractError("need 0 < r_min < r_max")
        if self.epochs_per_round < 1 or self.rounds < 1 or self.batch_size < 1:
            raise ContractError("epochs_per_round, rounds and batch_size must be positive")
        if self.pretrain_epochs < 0 or self.pretrain_lr <= 0:
            raise ContractError("pretrain_epochs must be >= 0 and pretrain_lr > 0")

    def to_json(self) -> dict:
        return {
            "r_max": self.r_max,
            "r_min": self.r_min,
            "epochs_per_round": self.epochs_per_round,
            "rounds": self.rounds,
            "pretrain_epochs": self.pretrain_epochs,
            "pretrain_lr": self.pretrain_lr,
            "batch_size": self.batch_size,
        }


# Rates used with a BERT-base classifier; far too small for the linear detector.
REFERENCE_SCHEDULE = CyclicalSchedule(r_max=5e-6, r_min=1e-7, epochs_per_round=5, rounds=1, pretrain_lr=5e-6)


def lr_at(t: float, sched: CyclicalSchedule) -> float:
    E = sched.epochs_per_round
    if not 0 <= t <= E:
        raise ContractError(f"t must lie in [0, {E}], got {t}")
    if t == E:
        return sched.r_min
    return sched.r_max - (t / E) * (sched.r_max - sched.r_min)


@dataclass
class LossLedger:
    ids: np.ndarray
    loss_sum: np.ndarray
    epochs: int = 0

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.loss_sum = np.asarray(self.loss_sum, dtype=np.float64)
        if self.ids.shape != self.loss_sum.shape:
            raise ContractError("ids and losses differ in length")
        if np.any(self.loss_sum < 0):
            raise ContractError("accumulated losses must be non-negative")

    def __len__(self) -> int:
        return len(self.ids)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, v in zip(self.ids.tolist(), self.loss_sum.tolist()):
                fh.write(json.dumps({"id": i, "loss_sum": v}) + "\n")

    @classmethod
    def load(cls, path) -> "LossLedger":
        ids, losses = [], []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    ids.append(obj["id"])
                    losses.append(obj["loss_sum"])
        return cls(np.array(ids, dtype=np.int64), np.array(losses, dtype=np.float64))


def loss_to_confidence(loss_sum: np.ndarray) -> np.ndarray:
    """Affine map of ``-loss`` onto [0, 1]: the smallest loss scores 1."""
    lo, hi = float(loss_sum.min()), float(loss_sum.max())
    if hi == lo:
        return np.ones_like(loss_sum)
    return np.clip((hi - loss_sum) / (hi - lo), 0.0, 1.0)


def o2u_detect(
    ds: SilverDataset,
    sched: CyclicalSchedule | None = None,
    seed: int = 0,
    model: LinearSoftmaxModel | None = None,
) -> tuple[LossLedger, list[ConfidenceRecord]]:
    sched = sched or CyclicalSchedule()
    x = np.ascontiguousarray(ds.features_matrix())
    y = ds.silver_array()
    n, k = len(y), ds.num_classes
    if n == 0:
        raise ContractError("empty dataset")
    model = model.copy() if model is not None else LinearSoftmaxModel.zeros(k, ds.feature_dim)
    rng = rng_for(seed, "o2u.order")
    unused = np.zeros((n, k))

    def run(lr: float, epoch: int) -> None:
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
            kernels.train_epoch(x, y, unused, model.W, model.b, rng.permutation(n), sched.batch_size, lr, 0.0, kernels.CE)
        check_finite(model, x, y, epoch)

    epoch = 0
    for _ in range(sched.pretrain_epochs):
        epoch += 1
        run(sched.pretrain_lr, epoch)

    total = np.zeros(n)
    recorded = 0
    for _ in range(sched.rounds):
        for t in range(1, sched.epochs_per_round + 1):
            epoch += 1
            run(lr_at(t, sched), epoch)
            losses = kernels.ce_losses(x, y, model.W, model.b)
            if not np.all(np.isfinite(losses)):
                raise TrainingError("non-finite per-sample loss", epoch)
            total += np.maximum(losses, 0.0)
            recorded += 1

    ledger = LossLedger(ds.ids, total, recorded)
    conf = loss_to_confidence(total)
    pred = model.predict_proba(x).argmax(axis=1)
    records = [ConfidenceRecord(int(i), float(c), int(p)) for i, c, p in zip(ds.ids, conf, pred)]
    return ledger, records


def o2u_select(ledger: LossLedger, eta: float, records: list[ConfidenceRecord] | None = None) -> CleanSet:
    """The ``floor(eta * N)`` samples with the smallest accumulated loss."""
    if not 0.0 < eta <= 1.0:
        raise ContractError(f"eta must be in (0, 1], got {eta}")
    order = np.lexsort((ledger.ids, ledger.loss_sum))
    chosen = [int(i) for i in ledger.ids[order[: proportion_size(eta, len(ledger))]]]
    predicted = {}
    if records is not None:
        by_id = {r.id: r.predicted for r in records}
        predicted = {i: by_id[i] for i in chosen if i in by_id}
    return CleanSet(chosen, {i: CORE for i in chosen}, predicted, eta, 0)
