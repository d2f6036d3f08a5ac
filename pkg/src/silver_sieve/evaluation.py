"""Detection-quality metrics for a selected clean set.

Detection accuracy is the share of selected samples whose silver label equals
gold. Classes are split into a majority and a minority half by descending
sample count (the extra class of an odd split goes to the majority).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .dataset import SilverDataset, class_counts
from .errors import ContractError, MissingGroundTruthError
from .selector import CORE, DIVERSITY, CleanSet, select_by_proportion
from .trainer import ConfidenceRecord

SCHEMA_VERSION = 1


class UndefinedMetricError(ContractError):
    pass


def _labels(clean: CleanSet, ds: SilverDataset, gold_required=True):
    by_id = ds.by_id()
    silver, gold = [], []
    for sid in clean.ids:
        s = by_id.get(sid)
        if s is None:
            raise ContractError(f"clean set id {sid} not in dataset")
        if gold_required and s.gold_label is None:
            raise MissingGroundTruthError(f"sample {sid} has no gold label")
        silver.append(s.silver_label)
        gold.append(s.gold_label)
    return np.array(silver, dtype=np.int64), np.array(gold if gold_required else [], dtype=np.int64)


def detection_accuracy(clean: CleanSet, ds: SilverDataset) -> float:
    if len(clean) == 0:
        raise UndefinedMetricError("detection accuracy of an empty clean set is undefined")
    silver, gold = _labels(clean, ds)
    return float(np.count_nonzero(silver == gold)) / len(silver)


def silver_accuracy(ds: SilverDataset) -> float:
    return float(np.mean(ds.silver_array() == ds.gold_array()))


def class_coverage(clean: CleanSet, ds: SilverDataset) -> tuple[int, np.ndarray]:
    silver, _ = _labels(clean, ds, gold_required=False)
    counts = class_counts(silver, ds.num_classes)
    return int(np.count_nonzero(counts)), counts


def majority_minority_split(ds: SilverDataset, use_gold: bool = False) -> tuple[list[int], list[int]]:
    labels = ds.gold_array() if use_gold else ds.silver_array()
    counts = class_counts(labels, ds.num_classes)
    order = sorted(range(ds.num_classes), key=lambda c: (-counts[c], c))
    half = math.ceil(ds.num_classes / 2)
    return sorted(order[:half]), sorted(order[half:])


def group_accuracy(clean: CleanSet, ds: SilverDataset, classes: Sequence[int]) -> float | None:
    """Detection accuracy over selected samples whose silver label is in ``classes``.

    ``None`` when no selected sample falls into the group.
    """
    silver, gold = _labels(clean, ds)
    mask = np.isin(silver, list(classes))
    if not mask.any():
        return None
    return float(np.count_nonzero(silver[mask] == gold[mask])) / int(mask.sum())


@dataclass
class Histogram:
    edges: list[float]
    clean: list[int]
    noisy: list[int]

    @property
    def bins(self) -> int:
        return len(self.clean)


def score_histogram(records: Sequence[ConfidenceRecord], ds: SilverDataset, bins: int = 10) -> Histogram:
    """Equal-width bins over [0, 1]; a score of exactly 1 lands in the last bin."""
    if bins < 1:
        raise ContractError("bins must be a positive integer")
    by_id = ds.by_id()
    clean_scores, noisy_scores = [], []
    for r in records:
        s = by_id.get(r.id)
        if s is None:
            raise ContractError(f"record id {r.id} not in dataset")
        if s.gold_label is None or s.silver_label is None:
            raise MissingGroundTruthError(f"sample {r.id} needs silver and gold labels")
        (clean_scores if s.silver_label == s.gold_label else noisy_scores).append(r.confidence)
    edges = np.linspace(0.0, 1.0, bins + 1)
    c, _ = np.histogram(np.asarray(clean_scores, dtype=np.float64), bins=edges)
    n, _ = np.histogram(np.asarray(noisy_scores, dtype=np.float64), bins=edges)
    return Histogram(edges.tolist(), c.astype(int).tolist(), n.astype(int).tolist())


@dataclass
class DetectionReport:
    detection_accuracy: float
    silver_accuracy: float
    n_selected: int
    n_core: int
    n_diversity: int
    per_class_selected_counts: list[int]
    classes_covered: int
    majority_classes: list[int]
    minority_classes: list[int]
    majority_accuracy: float | None
    minority_accuracy: float | None
    histogram: Histogram | None = None
    proportion_only: dict | None = None
    config: dict = field(default_factory=dict)
    label_names: list[str] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> dict:
        out = {"schema_version": self.schema_version}
        out.update({k: v for k, v in asdict(self).items() if k != "schema_version"})
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    @classmethod
    def from_json(cls, obj: dict) -> "DetectionReport":
        obj = dict(obj)
        if obj.get("schema_version") != SCHEMA_VERSION:
            raise ContractError(f"unsupported report schema_version {obj.get('schema_version')}")
        hist = obj.pop("histogram", None)
        return cls(histogram=Histogram(**hist) if hist else None, **obj)


def emit_report(
    clean: CleanSet,
    ds: SilverDataset,
    records: Sequence[ConfidenceRecord] | None = None,
    config: dict | None = None,
    bins: int = 10,
    use_gold_split: bool = False,
) -> DetectionReport:
    """Gather every metric into one report.

    With ``records`` the report also carries the confidence histogram and the
    per-class counts a proportion-only selection of the same core size would
    have produced, for comparison against class-aware selection.
    """
    if not ds.has_gold:
        raise MissingGroundTruthError("evaluation needs gold labels on every sample")
    covered, counts = class_coverage(clean, ds)
    major, minor = majority_minority_split(ds, use_gold=use_gold_split)
    hist = prop = None
    if records is not None:
        hist = score_histogram(records, ds, bins)
        if clean.eta is not None:
            base = select_by_proportion(records, clean.eta)
            b_cov, b_counts = class_coverage(base, ds)
            prop = {
                "n_selected": len(base),
                "detection_accuracy": detection_accuracy(base, ds) if len(base) else None,
                "per_class_selected_counts": b_counts.tolist(),
                "classes_covered": b_cov,
                "majority_accuracy": group_accuracy(base, ds, major),
                "minority_accuracy": group_accuracy(base, ds, minor),
            }
    return DetectionReport(
        detection_accuracy=detection_accuracy(clean, ds),
        silver_accuracy=silver_accuracy(ds),
        n_selected=len(clean),
        n_core=len(clean.ids_in(CORE)),
        n_diversity=len(clean.ids_in(DIVERSITY)),
        per_class_selected_counts=counts.tolist(),
        classes_covered=covered,
        majority_classes=major,
        minority_classes=minor,
        majority_accuracy=group_accuracy(clean, ds, major),
        minority_accuracy=group_accuracy(clean, ds, minor),
        histogram=hist,
        proportion_only=prop,
        config=dict(config or {}),
        label_names=list(ds.label_space.names),
    )
