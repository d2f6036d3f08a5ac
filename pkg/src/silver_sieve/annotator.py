"""Silver labeling from entailment scores.

For every sample an external textual-entailment model has scored one
hypothesis per (relation, template). A relation's score is the best of its
templates; relations whose entity-type constraints the sample violates are
zeroed; the highest remaining relation wins unless it falls below the
no-relation threshold or scores zero.
"""
from __future__ import annotations

import json
import string
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .dataset import LabelSpace, SilverDataset
from .errors import ContractError, SchemaError
from .seeding import rng_for

PLACEHOLDERS = frozenset({"subj", "obj"})
DEFAULT_THRESHOLD = 0.5


def template_fields(template: str) -> list[str]:
    try:
        return [name for _, name, _, _ in string.Formatter().parse(template) if name is not None]
    except ValueError as exc:
        raise SchemaError(f"malformed template {template!r}: {exc}") from None


@dataclass(frozen=True)
class Relation:
    name: str
    templates: tuple[str, ...] = ()
    constraints: frozenset[tuple[str, str]] = frozenset()

    def allows(self, subj_type: str | None, obj_type: str | None) -> bool:
        return not self.constraints or (subj_type, obj_type) in self.constraints


@dataclass(frozen=True)
class RelationSchema:
    relations: tuple[Relation, ...]
    threshold: float = DEFAULT_THRESHOLD
    no_relation: str = "no_relation"
    label_space: LabelSpace = field(init=False)
    positive: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = [r.name for r in self.relations]
        if self.no_relation not in names:
            raise SchemaError(f"schema has no {self.no_relation!r} class")
        neg = names.index(self.no_relation)
        object.__setattr__(self, "label_space", LabelSpace(tuple(names), neg))
        object.__setattr__(self, "positive", tuple(i for i in range(len(names)) if i != neg))
        if not 0.0 <= self.threshold <= 1.0:
            raise SchemaError(f"threshold must be in [0, 1], got {self.threshold}")
        for rel in self.relations:
            if rel.name == self.no_relation:
                if rel.templates:
                    raise SchemaError(f"{rel.name!r} must not carry templates")
                continue
            if not rel.templates:
                raise SchemaError(f"relation {rel.name!r} has no templates")
            for t in rel.templates:
                found = template_fields(t)
                if set(found) != PLACEHOLDERS or len(found) != 2:
                    raise SchemaError(f"relation {rel.name!r}: template {t!r} must use {{subj}} and {{obj}} exactly once each")

    @property
    def negative_index(self) -> int:
        return self.label_space.negative_index

    @property
    def constrained(self) -> bool:
        return any(r.constraints for r in self.relations)

    def relation(self, name: str) -> Relation:
        return self.relations[self.label_space.index(name)]

    def with_threshold(self, threshold: float) -> "RelationSchema":
        return RelationSchema(self.relations, threshold, self.no_relation)

    # -- JSON ---------------------------------------------------------------

    @classmethod
    def from_json(cls, obj: Mapping) -> "RelationSchema":
        no_rel = obj.get("no_relation", "no_relation")
        rels = []
        for entry in obj["relations"]:
            cons = set()
            for c in entry.get("constraints", []):
                parts = c.split(":")
                if len(parts) != 2 or not all(parts):
                    raise SchemaError(f"relation {entry['name']!r}: constraint {c!r} is not SUBJTYPE:OBJTYPE")
                cons.add((parts[0], parts[1]))
            rels.append(Relation(entry["name"], tuple(entry.get("templates", [])), frozenset(cons)))
        if no_rel not in [r.name for r in rels]:
            rels.insert(0, Relation(no_rel))
        return cls(tuple(rels), float(obj.get("threshold", DEFAULT_THRESHOLD)), no_rel)

    def to_json(self) -> dict:
        out = []
        for r in self.relations:
            entry: dict = {"name": r.name}
            if r.templates:
                entry["templates"] = list(r.templates)
            if r.constraints:
                entry["constraints"] = sorted(f"{s}:{o}" for s, o in r.constraints)
            out.append(entry)
        return {"no_relation": self.no_relation, "threshold": self.threshold, "relations": out}

    @classmethod
    def load(cls, path) -> "RelationSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")


def fixture_schema() -> RelationSchema:
    """A handful of TACRED relations with their templates and type constraints."""
    text = resources.files("silver_sieve").joinpath("data/tacred_subset_schema.json").read_text(encoding="utf-8")
    return RelationSchema.from_json(json.loads(text))


def synthetic_schema(label_space: LabelSpace, threshold: float = DEFAULT_THRESHOLD) -> RelationSchema:
    """Unconstrained schema with one generic template per class of ``label_space``.

    Used when a synthetic dataset is pushed through pair export. A no-relation
    class is added unless the label space already declares one.
    """
    rels = []
    neg = label_space.names[label_space.negative_index] if label_space.negative_index is not None else "no_relation"
    for name in label_space.names:
        if name == neg:
            rels.append(Relation(name))
        else:
            rels.append(Relation(name, (f"{{subj}} has relation {name} with {{obj}}",)))
    if label_space.negative_index is None:
        rels.append(Relation(neg))
    return RelationSchema(tuple(rels), threshold, neg)


# ---------------------------------------------------------------------------
# score matrices


@dataclass
class ScoreMatrix:
    """Per sample id, per relation name, one entailment score per template."""

    rows: dict[int, dict[str, list[float]]]

    def __post_init__(self):
        for sid, row in self.rows.items():
            for rel, vals in row.items():
                # NaN fails both comparisons, infinities the range check
                try:
                    ok = all(0.0 <= v <= 1.0 for v in vals)
                except TypeError:
                    ok = False
                if not ok:
                    raise ContractError(f"sample {sid}, relation {rel!r}: scores must be a list of values in [0, 1]")

    @property
    def ids(self) -> list[int]:
        return list(self.rows)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for sid, row in self.rows.items():
                fh.write(json.dumps({"id": sid, "scores": row}) + "\n")

    @classmethod
    def load(cls, path) -> "ScoreMatrix":
        rows = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    rows[int(obj["id"])] = {k: [float(v) for v in vs] for k, vs in obj["scores"].items()}
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ContractError(f"scores line {lineno}: {exc}") from None
        return cls(rows)


def relation_scores(row: Mapping[str, Sequence[float]], schema: RelationSchema) -> np.ndarray:
    out = np.zeros(len(schema.relations))
    for i in schema.positive:
        rel = schema.relations[i]
        vals = row.get(rel.name)
        if vals is None or len(vals) != len(rel.templates):
            have = 0 if vals is None else len(vals)
            raise ContractError(f"relation {rel.name!r}: expected {len(rel.templates)} template scores, got {have}")
        out[i] = max(vals)
    return out


def apply_type_constraints(scores, subj_type: str | None, obj_type: str | None, schema: RelationSchema) -> np.ndarray:
    out = np.array(scores, dtype=np.float64)
    for i, rel in enumerate(schema.relations):
        if not rel.allows(subj_type, obj_type):
            out[i] = 0.0
    return out


def infer_label(masked_scores, schema: RelationSchema) -> int:
    pos = schema.positive
    vals = np.asarray(masked_scores, dtype=np.float64)[list(pos)]
    best = int(np.argmax(vals))  # first maximum, i.e. lowest relation index
    # a zero score carries no evidence (masked relations sit there), so even
    # tau = 0 cannot turn it into a prediction
    if vals[best] > 0.0 and vals[best] >= schema.threshold:
        return pos[best]
    return schema.negative_index


def annotate_dataset(ds: SilverDataset, scores: ScoreMatrix, schema: RelationSchema) -> SilverDataset:
    if ds.label_space != schema.label_space:
        raise ContractError("dataset label space differs from the schema's")
    if not scores.rows:
        raise ContractError("score matrix is empty")
    ds_ids, sc_ids = set(ds.ids.tolist()), set(scores.rows)
    if ds_ids != sc_ids:
        missing = sorted(ds_ids - sc_ids)[:5]
        extra = sorted(sc_ids - ds_ids)[:5]
        raise ContractError(f"id mismatch between dataset and scores (missing {missing}, unexpected {extra})")
    labels = []
    for s in ds.samples:
        subj_type = s.subj.type if s.subj else None
        obj_type = s.obj.type if s.obj else None
        if schema.constrained and (subj_type is None or obj_type is None):
            raise ContractError(f"sample {s.id} lacks entity types but the schema has type constraints")
        masked = apply_type_constraints(relation_scores(scores.rows[s.id], schema), subj_type, obj_type, schema)
        labels.append(infer_label(masked, schema))
    return ds.with_silver(labels)


def stub_scorer(ds: SilverDataset, schema: RelationSchema, corruption: float, seed: int = 0) -> ScoreMatrix:
    """Scores that make the annotator reproduce gold except on a chosen fraction.

    Exactly ``round(corruption * N)`` samples get a uniformly chosen wrong
    label as their target. The target relation gets one template scoring at
    or above the threshold; every other cell stays below ``0.9 * threshold``.
    A no-relation target simply leaves every cell below the threshold.
    """
    from .dataset import noise_count

    if not 0.0 <= corruption <= 1.0:
        raise ContractError("corruption must be in [0, 1]")
    if schema.threshold <= 0.0:
        raise ContractError("stub scores need a positive threshold to express no_relation")
    gold = ds.gold_array()
    k = len(schema.relations)
    rng = rng_for(seed, "stub_scorer")
    target = gold.copy()
    n_bad = noise_count(corruption, len(gold))
    if n_bad and k < 2:
        raise ContractError("cannot corrupt with a single relation")
    picked = np.sort(rng.choice(len(gold), size=n_bad, replace=False))
    offs = rng.integers(0, k - 1, size=n_bad)
    target[picked] = offs + (offs >= gold[picked])
    tau = schema.threshold
    rows = {}
    for s, t in zip(ds.samples, target):
        row = {}
        for i in schema.positive:
            rel = schema.relations[i]
            vals = (rng.random(len(rel.templates)) * 0.9 * tau).tolist()
            if i == t:
                vals[int(rng.integers(len(vals)))] = tau + (1.0 - tau) * float(rng.uniform(0.1, 1.0))
            row[rel.name] = vals
        rows[s.id] = row
    return ScoreMatrix(rows)


def with_label_space(ds: SilverDataset, label_space: LabelSpace) -> SilverDataset:
    """Rebind a dataset to ``label_space`` by label name."""
    old = ds.label_space.names
    remap = [label_space.index(name) for name in old]
    samples = tuple(
        replace(
            s,
            silver_label=None if s.silver_label is None else remap[s.silver_label],
            gold_label=None if s.gold_label is None else remap[s.gold_label],
        )
        for s in ds.samples
    )
    return SilverDataset(label_space, ds.feature_dim, samples)
