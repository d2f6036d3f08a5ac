"""Sample containers, JSONL I/O, the synthetic noisy-imbalanced generator and
dataset statistics."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ContractError, DimensionError, MissingGroundTruthError, ParseError, SchemaError
from .seeding import rng_for

JSONL_FIELDS = ("id", "features", "silver_label", "gold_label", "subj", "obj", "subj_type", "obj_type", "text")


@dataclass(frozen=True)
class LabelSpace:
    names: tuple[str, ...]
    negative_index: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if not self.names:
            raise SchemaError("label space is empty")
        if any(not isinstance(n, str) or not n for n in self.names):
            raise SchemaError("label names must be non-empty strings")
        if len(set(self.names)) != len(self.names):
            raise SchemaError("label names must be unique")
        if self.negative_index is not None and not 0 <= self.negative_index < len(self.names):
            raise SchemaError(f"negative_index {self.negative_index} out of range")

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown label {name!r}") from None

    @classmethod
    def numbered(cls, n: int, prefix: str = "class") -> "LabelSpace":
        return cls(tuple(f"{prefix}{i}" for i in range(n)))

    def to_json(self) -> dict:
        return {"names": list(self.names), "negative_index": self.negative_index}

    @classmethod
    def from_json(cls, obj: dict) -> "LabelSpace":
        return cls(tuple(obj["names"]), obj.get("negative_index"))


class Mention(NamedTuple):
    text: str
    type: str | None = None


@dataclass(frozen=True)
class Sample:
    id: int
    features: tuple[float, ...]
    silver_label: int | None = None
    gold_label: int | None = None
    subj: Mention | None = None
    obj: Mention | None = None
    text: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(x) for x in self.features))
        if self.id < 0:
            raise ContractError(f"sample id must be non-negative, got {self.id}")


@dataclass(frozen=True)
class SilverDataset:
    label_space: LabelSpace
    feature_dim: int
    samples: tuple[Sample, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.feature_dim < 1:
            raise DimensionError(f"feature_dim must be positive, got {self.feature_dim}")
        k = len(self.label_space)
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise ContractError(f"duplicate sample id {s.id}")
            seen.add(s.id)
            if len(s.features) != self.feature_dim:
                raise DimensionError(f"sample {s.id} has {len(s.features)} features, expected {self.feature_dim}")
            for lab in (s.silver_label, s.gold_label):
                if lab is not None and not 0 <= lab < k:
                    raise SchemaError(f"sample {s.id}: label index {lab} outside label space of size {k}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def num_classes(self) -> int:
        return len(self.label_space)

    @property
    def ids(self) -> np.ndarray:
        return np.array([s.id for s in self.samples], dtype=np.int64)

    def features_matrix(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, self.feature_dim))
        return np.array([s.features for s in self.samples], dtype=np.float64)

    def silver_array(self) -> np.ndarray:
        if any(s.silver_label is None for s in self.samples):
            raise ContractError("every sample needs a silver label")
        return np.array([s.silver_label for s in self.samples], dtype=np.int64)

    def gold_array(self) -> np.ndarray:
        if any(s.gold_label is None for s in self.samples):
            raise MissingGroundTruthError("every sample needs a gold label")
        return np.array([s.gold_label for s in self.samples], dtype=np.int64)

    @property
    def has_gold(self) -> bool:
        return bool(self.samples) and all(s.gold_label is not None for s in self.samples)

    def by_id(self) -> dict[int, Sample]:
        return {s.id: s for s in self.samples}

    def with_silver(self, labels: Sequence[int]) -> "SilverDataset":
        if len(labels) != len(self.samples):
            raise ContractError("label vector length differs from dataset size")
        samples = tuple(replace(s, silver_label=int(lab)) for s, lab in zip(self.samples, labels))
        return replace(self, samples=samples)


# ---------------------------------------------------------------------------
# JSONL


def _sample_to_json(s: Sample, names: tuple[str, ...]) -> dict:
    obj: dict = {"id": s.id, "features": list(s.features)}
    if s.silver_label is not None:
        obj["silver_label"] = names[s.silver_label]
    if s.gold_label is not None:
        obj["gold_label"] = names[s.gold_label]
    if s.subj is not None:
        obj["subj"] = s.subj.text
        if s.subj.type is not None:
            obj["subj_type"] = s.subj.type
    if s.obj is not None:
        obj["obj"] = s.obj.text
        if s.obj.type is not None:
            obj["obj_type"] = s.obj.type
    if s.text is not None:
        obj["text"] = s.text
    return obj


def _mention(obj: dict, key: str) -> Mention | None:
    if obj.get(key) is None:
        return None
    return Mention(str(obj[key]), obj.get(f"{key}_type"))


def load_jsonl(path: str | os.PathLike, label_space: LabelSpace, feature_dim: int | None = None) -> SilverDataset:
    """Read one sample per line. Labels are stored by name.

    ``feature_dim`` defaults to the length of the first sample's features.
    """
    samples = []
    seen: set[int] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed JSON ({exc.msg})", lineno) from None
            if not isinstance(obj, dict) or "id" not in obj or "features" not in obj:
                raise ParseError("expected an object with 'id' and 'features'", lineno)
            feats = obj["features"]
            if not isinstance(feats, list):
                raise ParseError("'features' must be a list", lineno)
            if feature_dim is None:
                feature_dim = len(feats)
            if len(feats) != feature_dim:
                raise DimensionError(f"expected {feature_dim} features, got {len(feats)}", lineno)
            try:
                silver = label_space.index(obj["silver_label"]) if obj.get("silver_label") is not None else None
                gold = label_space.index(obj["gold_label"]) if obj.get("gold_label") is not None else None
            except SchemaError as exc:
                raise SchemaError(f"line {lineno}: {exc}") from None
            sid = obj["id"]
            if not isinstance(sid, int) or sid < 0:
                raise ParseError(f"id must be a non-negative integer, got {sid!r}", lineno)
            if sid in seen:
                raise ParseError(f"duplicate id {sid}", lineno)
            seen.add(sid)
            samples.append(
                Sample(
                    id=sid,
                    features=feats,
                    silver_label=silver,
                    gold_label=gold,
                    subj=_mention(obj, "subj"),
                    obj=_mention(obj, "obj"),
                    text=obj.get("text"),
                )
            )
    return SilverDataset(label_space, feature_dim or 1, tuple(samples))


def save_jsonl(ds: SilverDataset, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in ds.samples:
            fh.write(json.dumps(_sample_to_json(s, ds.label_space.names)))
            fh.write("\n")


def labels_sidecar(path: str | os.PathLike) -> Path:
    return Path(str(path) + ".labels.json")


def save_dataset(ds: SilverDataset, path: str | os.PathLike) -> None:
    """``save_jsonl`` plus a ``.labels.json`` sidecar describing the label space."""
    save_jsonl(ds, path)
    meta = {**ds.label_space.to_json(), "feature_dim": ds.feature_dim}
    labels_sidecar(path).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def load_dataset(path: str | os.PathLike, label_space: LabelSpace | None = None) -> SilverDataset:
    """Load a JSONL dataset, taking the label space from its sidecar when not given."""
    side = labels_sidecar(path)
    feature_dim = None
    if side.exists():
        meta = json.loads(side.read_text(encoding="utf-8"))
        feature_dim = meta.get("feature_dim")
        if label_space is None:
            label_space = LabelSpace.from_json(meta)
    if label_space is None:
        raise SchemaError(f"no label space for {path}: pass a schema or provide {side.name}")
    return load_jsonl(path, label_space, feature_dim)


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int
    feature_dim: int
    mean_separation: float = 3.0
    class_sizes: tuple[int, ...] | None = None
    power_law: float | None = None
    n_samples: int | None = None
    noise_ratio: float = 0.0
    noise_mode: str = "symmetric"
    transition: tuple[tuple[float, ...], ...] | None = None
    seed: int = 0
    with_text: bool = False

    def __post_init__(self):
        if self.num_classes < 1:
            raise ContractError("num_classes must be positive")
        if self.feature_dim < max(1, self.num_classes - 1):
            raise ContractError(
                f"feature_dim {self.feature_dim} cannot hold {self.num_classes} equidistant centroids "
                f"(need >= {self.num_classes - 1})"
            )
        if self.mean_separation <= 0:
            raise ContractError("mean_separation must be positive")
        if self.class_sizes is not None:
            if len(self.class_sizes) != self.num_classes or min(self.class_sizes) < 1:
                raise ContractError("class_sizes needs num_classes entries, each >= 1")
        elif self.power_law is None or self.n_samples is None:
            raise ContractError("give either class_sizes or both power_law and n_samples")
        elif self.n_samples < self.num_classes:
            raise ContractError("n_samples must allow at least one sample per class")
        if not 0.0 <= self.noise_ratio <= 1.0:
            raise ContractError("noise_ratio must be in [0, 1]")
        if self.noise_mode not in ("symmetric", "pairwise"):
            raise ContractError(f"unknown noise_mode {self.noise_mode!r}")
        if self.noise_mode == "pairwise":
            if self.transition is None:
                raise ContractError("pairwise noise needs a transition matrix")
            validate_transition(self.transition, self.num_classes)

    def sizes(self) -> list[int]:
        if self.class_sizes is not None:
            return list(self.class_sizes)
        return power_law_sizes(self.num_classes, self.power_law, self.n_samples)


def validate_transition(matrix, k: int) -> np.ndarray:
    t = np.asarray(matrix, dtype=np.float64)
    if t.shape != (k, k):
        raise ContractError(f"transition matrix must be {k}x{k}")
    if np.any(t < 0) or np.any(np.diag(t) != 0) or not np.allclose(t.sum(axis=1), 1.0, atol=1e-9):
        raise ContractError("transition rows must be non-negative, sum to 1, with zero diagonal")
    return t


def power_law_sizes(num_classes: int, exponent: float, total: int) -> list[int]:
    """Sizes proportional to k**-exponent (largest first) summing to ``total``.

    Every class keeps at least one sample; the remainder is distributed by
    largest fractional part so the total is exact.
    """
    if total < num_classes:
        raise ContractError("total must be >= num_classes")
    raw = np.arange(1, num_classes + 1, dtype=np.float64) ** (-float(exponent))
    spare = total - num_classes
    share = raw / raw.sum() * spare
    base = np.floor(share).astype(np.int64)
    short = spare - int(base.sum())
    # stable argsort keeps the lower class index first on equal remainders
    order = np.argsort(-(share - base), kind="stable")
    base[order[:short]] += 1
    return [int(b) + 1 for b in base]


def simplex_centroids(num_classes: int, dim: int, separation: float) -> np.ndarray:
    """``num_classes`` points in ``dim`` dimensions, all pairwise ``separation`` apart."""
    if num_classes == 1:
        return np.zeros((1, dim))
    verts = np.eye(num_classes) * (separation / math.sqrt(2.0))
    verts -= verts.mean(axis=0)
    # centred vertices span k-1 dims; project onto that subspace
    _, _, vt = np.linalg.svd(verts)
    coords = verts @ vt[: num_classes - 1].T
    out = np.zeros((num_classes, dim))
    out[:, : num_classes - 1] = coords
    return out


def generate_synthetic(cfg: SynthConfig, label_space: LabelSpace | None = None) -> SilverDataset:
    """Isotropic unit-variance Gaussian classes, silver = gold + injected noise."""
    sizes = cfg.sizes()
    label_space = label_space or LabelSpace.numbered(cfg.num_classes)
    if len(label_space) != cfg.num_classes:
        raise ContractError("label space size differs from num_classes")
    rng = rng_for(cfg.seed, "synth.features")
    centroids = simplex_centroids(cfg.num_classes, cfg.feature_dim, cfg.mean_separation)
    gold = np.repeat(np.arange(cfg.num_classes), sizes)
    rng.shuffle(gold)
    feats = centroids[gold] + rng.standard_normal((gold.size, cfg.feature_dim))
    samples = []
    for i, (g, x) in enumerate(zip(gold, feats)):
        subj = obj = text = None
        if cfg.with_text:
            subj, obj = Mention(f"E{i}s", "ENT"), Mention(f"E{i}o", "ENT")
            text = f"{subj.text} is mentioned together with {obj.text} ."
        samples.append(Sample(i, tuple(x.tolist()), int(g), int(g), subj, obj, text))
    ds = SilverDataset(label_space, cfg.feature_dim, tuple(samples))
    return inject_noise(ds, cfg.noise_ratio, cfg.noise_mode, cfg.seed, cfg.transition)


def noise_count(ratio: float, n: int) -> int:
    # round half up; Python's round() is banker's rounding
    return int(math.floor(ratio * n + 0.5))


def inject_noise(
    ds: SilverDataset,
    ratio: float,
    mode: str = "symmetric",
    seed: int = 0,
    transition=None,
) -> SilverDataset:
    """Relabel exactly ``round(ratio * N)`` samples (chosen without replacement).

    Silver labels start as a copy of gold. Symmetric noise picks the wrong
    label uniformly among the other classes; pairwise noise draws it from the
    gold class's row of ``transition``.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ContractError("noise ratio must be in [0, 1]")
    gold = ds.gold_array()
    k = ds.num_classes
    n_flip = noise_count(ratio, len(gold))
    if n_flip and k < 2:
        raise ContractError("cannot corrupt labels with a single class")
    rng = rng_for(seed, "noise")
    silver = gold.copy()
    picked = np.sort(rng.choice(len(gold), size=n_flip, replace=False))
    if mode == "symmetric":
        offs = rng.integers(0, k - 1, size=n_flip) if n_flip else np.zeros(0, dtype=np.int64)
        g = gold[picked]
        silver[picked] = offs + (offs >= g)
    elif mode == "pairwise":
        t = validate_transition(transition, k)
        for idx in picked:
            silver[idx] = rng.choice(k, p=t[gold[idx]])
    else:
        raise ContractError(f"unknown noise mode {mode!r}")
    return ds.with_silver(silver)


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class DatasetStats:
    n: int
    class_counts: tuple[int, ...]
    noise_ratio: float | None

    def to_json(self, label_space: LabelSpace | None = None) -> dict:
        out = {"n": self.n, "class_counts": list(self.class_counts), "noise_ratio": self.noise_ratio}
        if label_space is not None:
            out["class_counts_by_name"] = dict(zip(label_space.names, self.class_counts))
        return out


def class_counts(labels: Iterable[int], k: int) -> np.ndarray:
    return np.bincount(np.asarray(list(labels), dtype=np.int64), minlength=k)[:k]


def dataset_stats(ds: SilverDataset) -> DatasetStats:
    silver = ds.silver_array()
    counts = class_counts(silver, ds.num_classes)
    ratio = None
    if ds.has_gold:
        ratio = float(np.count_nonzero(silver != ds.gold_array())) / len(silver)
    return DatasetStats(len(silver), tuple(int(c) for c in counts), ratio)
