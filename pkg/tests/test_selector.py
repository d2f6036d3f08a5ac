import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from silver_sieve.errors import ContractError
from silver_sieve.selector import (
    CORE,
    DIVERSITY,
    CleanSet,
    SelectionConfig,
    diversity_quotas,
    proportion_size,
    select_by_proportion,
    select_class_aware,
    total_confidence,
)
from silver_sieve.trainer import ConfidenceRecord

from conftest import records
from reference import best_subset, class_aware_literal

record_lists = st.lists(
    st.tuples(st.floats(0, 1), st.integers(0, 3)), min_size=1, max_size=40
).map(lambda rows: [ConfidenceRecord(i, c, p) for i, (c, p) in enumerate(rows)])
etas = st.floats(0.01, 1.0)


class TestTotalConfidence:
    def test_values(self):
        assert total_confidence([]) == 0
        assert total_confidence(records([0.9, 0.8])) == pytest.approx(1.7)
        assert total_confidence(records([0.3])) == 0.3


class TestProportion:
    def test_example(self):
        clean = select_by_proportion(records([0.9, 0.1, 0.8, 0.7]), 0.5)
        assert clean.ids == [0, 2]
        assert all(clean.stage[i] == CORE for i in clean.ids)

    def test_all(self):
        assert sorted(select_by_proportion(records([0.2, 0.4, 0.1]), 1.0).ids) == [0, 1, 2]

    def test_tie_lower_id(self):
        assert select_by_proportion(records([0.5, 0.8, 0.8]), 1 / 3).ids == [1]

    def test_floor(self):
        assert proportion_size(0.05, 2000) == 100
        assert proportion_size(0.29, 100) == 29
        assert proportion_size(0.5, 5) == 2

    def test_eta_range(self):
        for bad in (0.0, 1.5, -0.1):
            with pytest.raises(ContractError):
                select_by_proportion(records([0.1]), bad)

    @settings(max_examples=100)
    @given(record_lists, etas)
    def test_size_and_optimality(self, recs, eta):
        clean = select_by_proportion(recs, eta)
        assert len(clean) == proportion_size(eta, len(recs))
        chosen = set(clean.ids)
        # nobody left out beats anybody taken
        worst_in = min((r.confidence for r in recs if r.id in chosen), default=math.inf)
        assert all(r.confidence <= worst_in for r in recs if r.id not in chosen)

    @settings(max_examples=60)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=10), etas)
    def test_matches_exhaustive(self, confs, eta):
        recs = records(confs)
        clean = select_by_proportion(recs, eta)
        _, best = best_subset(recs, len(clean))
        assert total_confidence(r for r in recs if r.id in clean) == pytest.approx(best, abs=1e-12)


class TestClassAware:
    def example(self):
        # core = 3 most confident; rest predicted A:4, B:2, C:1
        conf = [0.99, 0.98, 0.97, 0.6, 0.5, 0.4, 0.3, 0.45, 0.35, 0.2]
        pred = [0, 0, 0, 0, 0, 0, 0, 1, 1, 2]
        return records(conf, pred)

    def test_example(self):
        clean = select_class_aware(self.example(), 0.3, 4)
        assert len(clean) == 6
        assert clean.ids_in(CORE) == [0, 1, 2]
        assert clean.ids_in(DIVERSITY) == [3, 4, 7]

    def test_quotas(self):
        assert diversity_quotas({0: 4, 1: 2, 2: 1}, 4) == {0: 2, 1: 1, 2: 0}
        assert diversity_quotas({0: 2, 1: 1}, 100) == {0: 2, 1: 1}
        assert diversity_quotas({}, 5) == {}

    def test_m_zero(self):
        recs = self.example()
        assert select_class_aware(recs, 0.3, 0).ids == select_by_proportion(recs, 0.3).ids

    def test_m_exceeds_rest(self):
        clean = select_class_aware(self.example(), 0.3, 1000)
        assert sorted(clean.ids) == list(range(10))

    def test_config_validation(self):
        with pytest.raises(ContractError):
            SelectionConfig(eta=0.1, m=-1)
        with pytest.raises(ContractError):
            select_class_aware(self.example(), 0.0, 3)

    @settings(max_examples=100)
    @given(record_lists, etas, st.integers(0, 60))
    def test_invariants(self, recs, eta, m):
        base = select_by_proportion(recs, eta)
        clean = select_class_aware(recs, eta, m)
        assert clean.ids[: len(base)] == base.ids
        assert len(base) <= len(clean) <= len(base) + m
        assert len(set(clean.ids)) == len(clean.ids)
        div = set(clean.ids_in(DIVERSITY))
        assert not div & set(base.ids)
        by_id = {r.id: r for r in recs}
        # within a class, no excluded remainder sample beats an included one
        for c in {r.predicted for r in recs}:
            taken = [by_id[i].confidence for i in div if by_id[i].predicted == c]
            left = [r.confidence for r in recs if r.predicted == c and r.id not in clean]
            if taken and left:
                assert max(left) <= min(taken)

    @settings(max_examples=60)
    @given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 2)), min_size=1, max_size=10), etas, st.integers(0, 10))
    def test_matches_literal_steps(self, rows, eta, m):
        recs = [ConfidenceRecord(i, c, p) for i, (c, p) in enumerate(rows)]
        core_ref, picks_ref = class_aware_literal(recs, eta, m)
        clean = select_class_aware(recs, eta, m)
        assert len(clean.ids_in(CORE)) == len(core_ref)
        by_id = {r.id: r for r in recs}
        ours_core = [by_id[i] for i in clean.ids_in(CORE)]
        assert total_confidence(ours_core) == pytest.approx(total_confidence(by_id[i] for i in core_ref), abs=1e-12)
        if set(clean.ids_in(CORE)) != core_ref:
            return  # tied confidences: an equally good core, so the remainders differ
        for c, ref in picks_ref.items():
            ours = [by_id[i] for i in clean.ids_in(DIVERSITY) if by_id[i].predicted == c]
            assert len(ours) == len(ref)
            assert total_confidence(ours) == pytest.approx(total_confidence(by_id[i] for i in ref), abs=1e-12)

    def test_deterministic(self):
        recs = self.example()
        assert select_class_aware(recs, 0.3, 4) == select_class_aware(recs, 0.3, 4)


class TestCleanSetIO:
    def test_round_trip(self, tmp_path):
        clean = select_class_aware(records([0.9, 0.2, 0.5, 0.4], [0, 1, 1, 0]), 0.25, 2)
        clean.save(tmp_path / "c.json")
        assert CleanSet.load(tmp_path / "c.json") == clean

    def test_json_shape(self):
        obj = CleanSet([3, 1], {3: CORE, 1: DIVERSITY}, {}, 0.5, 1).to_json()
        assert obj["ids"] == [3, 1] and obj["stage"] == {"3": "core", "1": "diversity"}
        assert (obj["eta"], obj["m"]) == (0.5, 1)

    def test_duplicates(self):
        with pytest.raises(ContractError):
            CleanSet([1, 1])
