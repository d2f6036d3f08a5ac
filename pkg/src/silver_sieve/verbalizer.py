"""Premise-hypothesis pairs for finetuning an entailment model on clean data.

Every exported sample yields one entailment, one neutral and one
contradiction hypothesis. For a sample carrying a relation, the entailment
hypothesis verbalizes that relation, the neutral one a randomly chosen template
of some other relation, and the contradiction states that the two entities are
not related. For a no-relation sample the roles flip: "not related" is the
entailment, a random relation template the neutral, and "there is a relation"
the contradiction.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass
from typing import NamedTuple

from .annotator import RelationSchema
from .dataset import SilverDataset
from .errors import ContractError, SchemaError
from .seeding import rng_for
from .selector import CleanSet

log = logging.getLogger(__name__)

NO_RELATION_TEMPLATE = "{subj} and {obj} are not related"
HAS_RELATION_TEMPLATE = "There is a relation between {subj} and {obj}"
TE_LABELS = ("entailment", "neutral", "contradiction")

_FIELD = re.compile(r"\{([^{}]*)\}")
_RESIDUAL = re.compile(r"\{(?:subj|obj)\}")


@dataclass(frozen=True)
class PairRecord:
    premise: str
    hypothesis: str
    label: str
    sample_id: int | None = None

    def __post_init__(self):
        if self.label not in TE_LABELS:
            raise ContractError(f"unknown entailment label {self.label!r}")
        if _RESIDUAL.search(self.hypothesis):
            raise ContractError(f"hypothesis has unfilled placeholders: {self.hypothesis!r}")


def instantiate_template(template: str, subj: str, obj: str) -> str:
    names = _FIELD.findall(template)
    for name in names:
        if name not in ("subj", "obj"):
            raise SchemaError(f"unknown placeholder {{{name}}} in template {template!r}")
    if names.count("subj") > 1 or names.count("obj") > 1:
        raise SchemaError(f"placeholder repeated in template {template!r}")
    # single pass so entity text containing "{obj}" is never re-substituted
    return _FIELD.sub(lambda m: subj if m.group(1) == "subj" else obj, template)


def _pick(pool: list[str], rng) -> str:
    return pool[int(rng.integers(len(pool)))]


def build_pairs_positive(
    premise: str,
    subj: str,
    obj: str,
    relation: str,
    schema: RelationSchema,
    seed: int = 0,
    sample_id: int = 0,
    all_templates: bool = False,
) -> list[PairRecord]:
    rel = schema.relation(relation)
    if relation == schema.no_relation or not rel.templates:
        raise ContractError(f"{relation!r} has no templates to entail")
    pool = [t for r in schema.relations if r.name != relation for t in r.templates]
    if not pool:
        raise ContractError("neutral hypothesis needs a second relation with templates")
    rng = rng_for(seed, "verbalizer", sample_id)
    entail = rel.templates if all_templates else rel.templates[:1]
    out = [PairRecord(premise, instantiate_template(t, subj, obj), "entailment", sample_id) for t in entail]
    out.append(PairRecord(premise, instantiate_template(_pick(pool, rng), subj, obj), "neutral", sample_id))
    out.append(PairRecord(premise, instantiate_template(NO_RELATION_TEMPLATE, subj, obj), "contradiction", sample_id))
    return out


def build_pairs_negative(
    premise: str,
    subj: str,
    obj: str,
    schema: RelationSchema,
    seed: int = 0,
    sample_id: int = 0,
) -> list[PairRecord]:
    pool = [t for r in schema.relations for t in r.templates]
    if not pool:
        raise ContractError("schema has no relation templates")
    rng = rng_for(seed, "verbalizer", sample_id)
    return [
        PairRecord(premise, instantiate_template(NO_RELATION_TEMPLATE, subj, obj), "entailment", sample_id),
        PairRecord(premise, instantiate_template(_pick(pool, rng), subj, obj), "neutral", sample_id),
        PairRecord(premise, instantiate_template(HAS_RELATION_TEMPLATE, subj, obj), "contradiction", sample_id),
    ]


class ExportResult(NamedTuple):
    records: int
    samples: int
    skipped: int


def export_pairs(
    clean: CleanSet,
    ds: SilverDataset,
    schema: RelationSchema,
    path,
    seed: int = 0,
    all_templates: bool = False,
) -> ExportResult:
    """Write the pairs of every clean sample to ``path`` as JSONL.

    Samples without subject/object text or premise sentence are skipped; a
    single warning reports how many.
    """
    by_id = ds.by_id()
    names = ds.label_space.names
    written = samples = skipped = 0
    with open(path, "w", encoding="utf-8") as fh:
        for sid in clean.ids:
            s = by_id.get(sid)
            if s is None:
                raise ContractError(f"clean set id {sid} not in dataset")
            if s.silver_label is None:
                raise ContractError(f"sample {sid} has no silver label")
            if s.subj is None or s.obj is None or s.text is None:
                log.debug("sample %d: missing mention or sentence text, skipped", sid)
                skipped += 1
                continue
            relation = names[s.silver_label]
            if relation == schema.no_relation:
                recs = build_pairs_negative(s.text, s.subj.text, s.obj.text, schema, seed, sid)
            else:
                recs = build_pairs_positive(s.text, s.subj.text, s.obj.text, relation, schema, seed, sid, all_templates)
            for r in recs:
                fh.write(json.dumps(asdict(r)) + "\n")
            written += len(recs)
            samples += 1
    if skipped:
        log.warning("%d of %d clean samples lack mention or sentence text and were skipped", skipped, len(clean))
    return ExportResult(written, samples, skipped)
