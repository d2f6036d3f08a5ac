"""Clean-set selection from per-sample confidence scores.

Two selectors:

* ``select_by_proportion`` keeps the ``floor(eta * N)`` most confident samples,
  which is the size-constrained subset with the largest total confidence.
* ``select_class_aware`` starts from that core and then tops it up with up to
  ``m`` extra samples, spread over the predicted classes of the remainder in
  proportion to how many remaining samples each class holds.

Ties are always broken by the lower sample id.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ContractError
from .trainer import ConfidenceRecord

CORE, DIVERSITY = "core", "diversity"


@dataclass(frozen=True)
class SelectionConfig:
    eta: float = 0.05
    m: int = 0

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ContractError(f"eta must be in (0, 1], got {self.eta}")
        if self.m < 0:
            raise ContractError(f"m must be non-negative, got {self.m}")


@dataclass
class CleanSet:
    ids: list[int] = field(default_factory=list)
    stage: dict[int, str] = field(default_factory=dict)
    predicted: dict[int, int] = field(default_factory=dict)
    eta: float | None = None
    m: int | None = None

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise ContractError("clean set contains duplicate ids")
        for i in self.ids:
            self.stage.setdefault(i, CORE)

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, sid: int) -> bool:
        return sid in self.stage

    def ids_in(self, stage: str) -> list[int]:
        return [i for i in self.ids if self.stage[i] == stage]

    def to_json(self) -> dict:
        return {
            "ids": list(self.ids),
            "stage": {str(i): self.stage[i] for i in self.ids},
            "predicted": {str(i): self.predicted[i] for i in self.ids if i in self.predicted},
            "eta": self.eta,
            "m": self.m,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CleanSet":
        ids = [int(i) for i in obj["ids"]]
        stage = {int(k): v for k, v in obj.get("stage", {}).items()}
        predicted = {int(k): int(v) for k, v in obj.get("predicted", {}).items()}
        return cls(ids, stage, predicted, obj.get("eta"), obj.get("m"))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "CleanSet":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def total_confidence(records: Iterable[ConfidenceRecord]) -> float:
    return math.fsum(r.confidence for r in records)


def proportion_size(eta: float, n: int) -> int:
    # the epsilon absorbs float products such as 0.29 * 100 = 28.999999999999996
    return min(n, math.floor(eta * n + 1e-9))


def _ranked(records: Iterable[ConfidenceRecord]) -> list[ConfidenceRecord]:
    return sorted(records, key=lambda r: (-r.confidence, r.id))


def select_by_proportion(records: Sequence[ConfidenceRecord], eta: float) -> CleanSet:
    SelectionConfig(eta, 0)
    chosen = _ranked(records)[: proportion_size(eta, len(records))]
    return CleanSet(
        [r.id for r in chosen],
        {r.id: CORE for r in chosen},
        {r.id: r.predicted for r in chosen},
        eta,
        0,
    )


def diversity_quotas(class_sizes: dict[int, int], m: int) -> dict[int, int]:
    """``floor(|D^c| / |D_rest| * m)`` per class, capped at ``|D^c|``."""
    rest = sum(class_sizes.values())
    if rest == 0:
        return {c: 0 for c in class_sizes}
    return {c: min(size, size * m // rest) for c, size in class_sizes.items()}


def select_class_aware(records: Sequence[ConfidenceRecord], eta: float, m: int) -> CleanSet:
    SelectionConfig(eta, m)
    clean = select_by_proportion(records, eta)
    clean.m = m
    if m == 0:
        return clean
    by_class: dict[int, list[ConfidenceRecord]] = {}
    for r in records:
        if r.id not in clean:
            by_class.setdefault(r.predicted, []).append(r)
    quotas = diversity_quotas({c: len(v) for c, v in by_class.items()}, m)
    for c in sorted(by_class):
        for r in _ranked(by_class[c])[: quotas[c]]:
            clean.ids.append(r.id)
            clean.stage[r.id] = DIVERSITY
            clean.predicted[r.id] = r.predicted
    return clean
