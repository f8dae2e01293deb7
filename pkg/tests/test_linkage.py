import datetime as dt
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from civicleak.docminer import extract_corpus, generate_corpus
from civicleak.harvester import (
    HarvestPlan,
    EngineConfig,
    Query,
    ResultStore,
    amka_targets,
    harvest_amka,
    harvest_stats,
    harvest_trn,
    harvest_voter,
    seeds_from_trn,
)
from civicleak.linkage import (
    SLOTS,
    JoinRule,
    Profile,
    completeness,
    conflict_reason,
    coverage,
    evaluate_linkage,
    link,
    link_detailed,
    load_profiles,
    save_profiles,
)
from civicleak.linkage import _Component
from civicleak.population import PopulationConfig, female_corpus, generate_world
from civicleak.registry import Registry, TrnRecord, VoterResult


@pytest.fixture(scope="module")
def pipeline():
    w = generate_world(PopulationConfig(person_count=400, seed=11, trn_exponent=4))
    reg = Registry(w)
    trn = harvest_trn(HarvestPlan(exponent=4), reg)
    seeds = seeds_from_trn(trn)
    voter = harvest_voter(seeds, female_corpus(), reg)
    amka = harvest_amka(amka_targets(seeds, voter), "calendar-reversed", reg)
    corpus = generate_corpus(w, 80, seed=2)
    hits = extract_corpus(corpus)
    return w, trn, voter, amka, corpus, hits


def _trn_store(record: TrnRecord) -> ResultStore:
    s = ResultStore()
    s.record(Query("trn_lookup", (record.trn,)), record, 0, "ip", 0)
    return s


def _voter_store(target, first, last, father, mother, year, center="EC-1") -> ResultStore:
    s = ResultStore()
    q = Query("voter_search", (first, last, father, mother[:2], year), target)
    s.record(q, VoterResult(center, "reg", mother, year), 0, "ip", 0)
    return s


def _amka_store(target, first, last, father, mother, dob, amka) -> ResultStore:
    s = ResultStore()
    s.record(Query("amka_search", (first, last, father, mother, dob), target), amka, 0, "ip", 0)
    return s


def test_empty_stores_give_no_profiles():
    assert link([]) == []
    assert link([ResultStore(), ResultStore()], []) == []


def test_trn_and_voter_merge(pipeline):
    w = pipeline[0]
    p = next(p for p in w.persons if p.category2)
    rec = TrnRecord.of(p, p.trns[0])
    voter = _voter_store(rec.trn, p.names.first, p.names.last, p.names.father, p.mother, p.dob.year)
    (profile,) = link([_trn_store(rec), voter])
    assert profile.business_record == rec and profile.electoral_center == "EC-1"
    assert profile.sources == {"trn", "voter"}


def test_same_triple_different_years_stay_apart(pipeline):
    w = pipeline[0]
    p = next(p for p in w.persons if p.category2)
    n = p.names
    a = _voter_store("t1", n.first, n.last, n.father, "MARIA", 1960)
    b = _voter_store("t2", n.first, n.last, n.father, "ELENI", 1970)
    assert len(link([a, b])) == 2


def test_homonym_trn_records_are_not_merged():
    from dataclasses import replace

    w = generate_world(PopulationConfig(person_count=50, seed=1, trn_exponent=4, category2_fraction=1.0))
    p, q = w.persons[:2]
    r1 = TrnRecord.of(p, p.trns[0])
    r2 = replace(TrnRecord.of(q, q.trns[0]), first_name=r1.first_name, last_name=r1.last_name,
                 father_name=r1.father_name)
    voter = _voter_store(r1.trn, r1.first_name, r1.last_name, r1.father_name, p.mother, p.dob.year)
    profiles = link([_trn_store(r1), _trn_store(r2), voter])
    assert len(profiles) == 3  # tie on the triple: precision over recall


def test_amka_dob_mismatch_is_refused(pipeline):
    w = pipeline[0]
    p = next(p for p in w.persons if p.category2)
    n = p.names
    voter = _voter_store("t", n.first, n.last, n.father, p.mother, p.dob.year)
    wrong = p.dob.replace(day=1 if p.dob.day != 1 else 2)
    amka = _amka_store("t", n.first, n.last, n.father, p.mother, wrong, p.amka)
    res = link_detailed([voter, amka])
    assert len(res.profiles) == 2
    assert len(res.conflicts) == 1 and res.conflicts[0].rule is JoinRule.BY_AMKA_DOB


def test_conflict_reason_checks_embedded_date():
    a = _Component(amkas={"01027012345"}, year=1970)
    assert conflict_reason(a, _Component(dob=dt.date(1970, 2, 1))) is None
    assert "AMKA" in conflict_reason(a, _Component(dob=dt.date(1970, 2, 2)))
    assert conflict_reason(a, _Component(year=1971)) is not None


def test_pipeline_perfect_precision(pipeline):
    w, trn, voter, amka, corpus, hits = pipeline
    profiles = link([trn, voter, amka], hits)
    score = evaluate_linkage(profiles, w, corpus)
    assert score.precision == 1.0
    assert score.recall == 1.0
    assert coverage(profiles, w) == 1.0
    for p in profiles:  # consistency holds for every emitted profile
        if p.amka and p.full_dob:
            assert p.amka[:6] == p.full_dob.strftime("%d%m%y")


def test_merged_persons_count_as_incorrect(pipeline):
    w = pipeline[0]
    a, b = w.persons[:2]
    bad = Profile(keys=frozenset({a.trns[0].trn, b.amka}), trns=(a.trns[0].trn,), amka=b.amka)
    good = Profile(keys=frozenset({a.amka}), amka=a.amka)
    s = evaluate_linkage([bad, good], w)
    assert s.judged == 2 and s.correct == 1 and s.precision == 0.5


def test_recall_bounded_by_harvest_recall():
    w = generate_world(PopulationConfig(person_count=300, seed=4, trn_exponent=4))
    store = harvest_trn(HarvestPlan(exponent=4, engine=EngineConfig(query_budget=3000)), Registry(w))
    s = evaluate_linkage(link([store]), w)
    assert s.recall <= harvest_stats(store, w).recall + 1e-12


def test_merge_commutativity(pipeline):
    _, trn, voter, amka, _, hits = pipeline
    base = link([trn, voter, amka], hits)
    rng = random.Random(0)
    for _ in range(3):
        stores = [trn, voter, amka]
        rng.shuffle(stores)
        shuffled = list(hits)
        rng.shuffle(shuffled)
        assert link(stores, shuffled) == base
    assert link([trn, voter, amka], hits, rules=list(reversed(JoinRule))) == base


def test_profile_export_round_trip(pipeline, tmp_path):
    _, trn, voter, amka, _, hits = pipeline
    profiles = link([trn, voter, amka], hits)
    save_profiles(profiles, tmp_path / "p.jsonl")
    assert load_profiles(tmp_path / "p.jsonl") == profiles


def test_unknown_rule_rejected():
    with pytest.raises(ValueError):
        link([], rules=["by-horoscope"])


# --- completeness -----------------------------------------------------------------


_FULL = Profile(keys=frozenset({"1", "2", "3"}), trns=("1",), amka="2", id_cards=("3",), mother="M",
                dob=dt.date(1970, 1, 1), electoral_center="E", business_record=object())


def test_completeness_endpoints():
    assert completeness(_FULL) == 1.0
    assert completeness(Profile(keys=frozenset({"1"}), trns=("1",))) == pytest.approx(1 / 7)
    assert completeness(Profile(keys=frozenset())) == 0.0
    assert completeness(Profile(keys=frozenset({"1"}), trns=("1",)), {"trn": 6.0}) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        completeness(_FULL, {"shoe_size": 1})


_SLOT_VALUES = {
    "trns": ("1",), "amka": "2", "id_cards": ("3",), "dob": dt.date(1970, 1, 1), "mother": "M",
    "electoral_center": "E", "business_record": object(),
}


@settings(max_examples=60, deadline=None)
@given(st.sets(st.sampled_from(sorted(_SLOT_VALUES))), st.sampled_from(sorted(_SLOT_VALUES)),
       st.dictionaries(st.sampled_from(SLOTS), st.floats(0.01, 10)))
def test_completeness_monotone(present, extra, weights):
    base = Profile(keys=frozenset(), **{k: _SLOT_VALUES[k] for k in present})
    more = Profile(keys=frozenset(), **{k: _SLOT_VALUES[k] for k in present | {extra}})
    assert 0.0 <= completeness(base, weights) <= completeness(more, weights) <= 1.0 + 1e-12
