import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from silver_sieve.annotator import (
    Relation,
    RelationSchema,
    ScoreMatrix,
    annotate_dataset,
    apply_type_constraints,
    fixture_schema,
    infer_label,
    relation_scores,
    stub_scorer,
    synthetic_schema,
    with_label_space,
)
from silver_sieve.dataset import LabelSpace, Mention, Sample, SilverDataset
from silver_sieve.errors import ContractError, SchemaError


def schema_r1_r2(tau=0.3, r2_constraints=(), r1_constraints=()):
    return RelationSchema(
        (
            Relation("no_relation"),
            Relation("r1", ("{subj} r1 {obj}",), frozenset(r1_constraints)),
            Relation("r2", ("{subj} r2 {obj}",), frozenset(r2_constraints)),
        ),
        tau,
    )


def dataset_for(schema, n=1, gold=None, types=("PERSON", "DATE")):
    samples = tuple(
        Sample(i, (float(i),), None, None if gold is None else gold[i], Mention("A", types[0]), Mention("B", types[1]))
        for i in range(n)
    )
    return SilverDataset(schema.label_space, 1, samples)


class TestSchema:
    def test_fixture_loads(self):
        s = fixture_schema()
        assert s.label_space.names[s.negative_index] == "no_relation"
        assert s.relation("per:schools_attended").constraints == frozenset({("PERSON", "ORGANIZATION")})
        assert s.relation("org:founded_by").constraints == frozenset()

    def test_json_round_trip(self, tmp_path):
        s = fixture_schema()
        s.save(tmp_path / "s.json")
        assert RelationSchema.load(tmp_path / "s.json") == s

    def test_no_relation_inserted(self):
        s = RelationSchema.from_json({"relations": [{"name": "r", "templates": ["{subj} r {obj}"]}]})
        assert s.label_space.names == ("no_relation", "r") and s.negative_index == 0

    @pytest.mark.parametrize(
        "template", ["{subj} studied", "{subj} and {subj} {obj}", "{subj} {obj} {x}", "{subj {obj}"]
    )
    def test_bad_templates(self, template):
        with pytest.raises(SchemaError):
            RelationSchema((Relation("no_relation"), Relation("r", (template,))))

    def test_missing_template_names_relation(self):
        with pytest.raises(SchemaError, match="per:spouse"):
            RelationSchema.from_json({"relations": [{"name": "per:spouse", "templates": []}]})

    def test_no_relation_without_templates(self):
        with pytest.raises(SchemaError):
            RelationSchema((Relation("no_relation", ("{subj} {obj}",)),))

    def test_bad_constraint_string(self):
        with pytest.raises(SchemaError):
            RelationSchema.from_json({"relations": [{"name": "r", "templates": ["{subj} {obj}"], "constraints": ["PERSON"]}]})

    def test_threshold_range(self):
        with pytest.raises(SchemaError):
            schema_r1_r2(tau=1.5)

    def test_synthetic_schema(self):
        s = synthetic_schema(LabelSpace.numbered(3))
        assert s.label_space.names == ("class0", "class1", "class2", "no_relation")
        assert s.relation("class1").templates == ("{subj} has relation class1 with {obj}",)


class TestRelationScores:
    def test_max_over_templates(self):
        s = RelationSchema((Relation("no_relation"), Relation("r", ("{subj} a {obj}", "{subj} b {obj}")), Relation("q", ("{subj} q {obj}",))))
        out = relation_scores({"r": [0.2, 0.7], "q": [0.4]}, s)
        assert out.tolist() == [0.0, 0.7, 0.4]
        assert relation_scores({"r": [0.0, 0.0], "q": [0.0]}, s).tolist() == [0.0, 0.0, 0.0]

    def test_missing_cell(self):
        s = fixture_schema()
        with pytest.raises(ContractError, match="per:employee_of"):
            relation_scores({"per:schools_attended": [0.1, 0.2]}, s)

    def test_short_row(self):
        s = schema_r1_r2()
        with pytest.raises(ContractError, match="r2"):
            relation_scores({"r1": [0.1], "r2": []}, s)


class TestTypeConstraints:
    def test_mismatch_zeroes(self):
        s = schema_r1_r2(r2_constraints={("PERSON", "DATE")})
        assert apply_type_constraints([0, 0.4, 0.9], "ORG", "DATE", s).tolist() == [0, 0.4, 0.0]

    def test_match_passes(self):
        s = schema_r1_r2(r2_constraints={("PERSON", "DATE")})
        assert apply_type_constraints([0, 0.4, 0.9], "PERSON", "DATE", s).tolist() == [0, 0.4, 0.9]


class TestInferLabel:
    def test_masked_argmax(self):
        s = schema_r1_r2(r2_constraints={("PERSON", "DATE")})
        masked = apply_type_constraints([0, 0.4, 0.9], "ORG", "DATE", s)
        assert infer_label(masked, s) == 1

    def test_below_threshold(self):
        assert infer_label([0, 0.2, 0.25], schema_r1_r2()) == 0

    def test_tie_lowest_index(self):
        assert infer_label([0, 0.5, 0.5], schema_r1_r2()) == 1

    def test_at_threshold_is_positive(self):
        assert infer_label([0, 0.3, 0.1], schema_r1_r2()) == 1

    def test_masked_relation_never_wins_at_zero_threshold(self):
        s = schema_r1_r2(0.0, r1_constraints={("PERSON", "ORG")}, r2_constraints={("PERSON", "ORG")})
        masked = apply_type_constraints([0, 0.7, 0.2], "PERSON", "DATE", s)
        assert infer_label(masked, s) == 0

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=2), st.floats(0, 1))
    def test_threshold_gates_max(self, scores, tau):
        s = schema_r1_r2(tau)
        label = infer_label([0.0] + scores, s)
        if max(scores) < tau or max(scores) == 0.0:
            assert label == 0
        else:
            assert label == 1 + int(np.argmax(scores))

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=2), st.floats(0, 1), st.integers(0, 1), st.floats(0, 1))
    def test_monotone_in_template_score(self, scores, tau, which, bump):
        # raising the winner's score never changes the prediction away from it
        s = schema_r1_r2(tau)
        label = infer_label([0.0] + scores, s)
        if label != 0:
            raised = list(scores)
            raised[label - 1] = max(raised[label - 1], bump)
            assert infer_label([0.0] + raised, s) == label


class TestAnnotateDataset:
    def test_single_sample(self):
        s = schema_r1_r2(r2_constraints={("PERSON", "DATE")})
        ds = dataset_for(s, types=("ORG", "DATE"))
        out = annotate_dataset(ds, ScoreMatrix({0: {"r1": [0.4], "r2": [0.9]}}), s)
        assert out.samples[0].silver_label == 1

    def test_id_mismatch(self):
        s = schema_r1_r2()
        with pytest.raises(ContractError, match="mismatch"):
            annotate_dataset(dataset_for(s), ScoreMatrix({5: {"r1": [0.4], "r2": [0.9]}}), s)

    def test_empty_scores(self):
        s = schema_r1_r2()
        with pytest.raises(ContractError):
            annotate_dataset(dataset_for(s), ScoreMatrix({}), s)

    def test_missing_types_with_constraints(self):
        s = schema_r1_r2(r2_constraints={("PERSON", "DATE")})
        ds = SilverDataset(s.label_space, 1, (Sample(0, (0.0,)),))
        with pytest.raises(ContractError):
            annotate_dataset(ds, ScoreMatrix({0: {"r1": [0.4], "r2": [0.9]}}), s)

    def test_pure(self):
        s = schema_r1_r2()
        ds = dataset_for(s, 3)
        sc = ScoreMatrix({i: {"r1": [0.1 * i], "r2": [0.2]} for i in range(3)})
        assert annotate_dataset(ds, sc, s) == annotate_dataset(ds, sc, s)
        assert annotate_dataset(ds, sc, s).features_matrix().tolist() == ds.features_matrix().tolist()

    def test_label_space_must_match(self):
        s = schema_r1_r2()
        ds = SilverDataset(LabelSpace(("x", "y", "z")), 1, (Sample(0, (0.0,)),))
        with pytest.raises(ContractError):
            annotate_dataset(ds, ScoreMatrix({0: {"r1": [0.4], "r2": [0.9]}}), s)


class TestScoreMatrix:
    def test_range(self):
        with pytest.raises(ContractError):
            ScoreMatrix({0: {"r": [1.2]}})

    def test_round_trip(self, tmp_path):
        sm = ScoreMatrix({0: {"r": [0.1, 0.9]}, 3: {"r": [0.5, 0.5]}})
        sm.save(tmp_path / "s.jsonl")
        assert ScoreMatrix.load(tmp_path / "s.jsonl") == sm
        line = json.loads((tmp_path / "s.jsonl").read_text().splitlines()[0])
        assert line == {"id": 0, "scores": {"r": [0.1, 0.9]}}


class TestStubScorer:
    def gold_dataset(self, n=10, k=3):
        s = synthetic_schema(LabelSpace.numbered(k))
        gold = [i % len(s.relations) for i in range(n)]
        return s, dataset_for(s, n, gold)

    def test_zero_corruption_reproduces_gold(self):
        s, ds = self.gold_dataset(40)
        out = annotate_dataset(ds, stub_scorer(ds, s, 0.0, seed=1), s)
        assert out.silver_array().tolist() == ds.gold_array().tolist()

    def test_full_corruption(self):
        s, ds = self.gold_dataset(40)
        out = annotate_dataset(ds, stub_scorer(ds, s, 1.0, seed=1), s)
        assert np.all(out.silver_array() != out.gold_array())

    def test_exact_count(self):
        s, ds = self.gold_dataset(10)
        out = annotate_dataset(ds, stub_scorer(ds, s, 0.4, seed=3), s)
        assert int(np.sum(out.silver_array() != out.gold_array())) == 4

    def test_deterministic(self):
        s, ds = self.gold_dataset(10)
        assert stub_scorer(ds, s, 0.5, 2) == stub_scorer(ds, s, 0.5, 2)

    def test_fixture_schema_with_matching_types(self):
        s = fixture_schema()
        gold = [s.label_space.index(n) for n in ("per:spouse", "org:founded_by", "no_relation")]
        ds = dataset_for(s, 3, gold, types=("PERSON", "PERSON"))
        out = annotate_dataset(ds, stub_scorer(ds, s, 0.0), s)
        assert out.silver_array().tolist() == gold


class TestWithLabelSpace:
    def test_remap_by_name(self):
        ds = SilverDataset(LabelSpace(("a", "b")), 1, (Sample(0, (0.0,), 1, 0),))
        out = with_label_space(ds, LabelSpace(("b", "x", "a")))
        assert (out.samples[0].silver_label, out.samples[0].gold_label) == (0, 2)
