"""Acceptance suite: one or more tests per numbered criterion.

Run alone with ``pytest tests/test_acceptance.py``; the terminal summary
prints one PASS/FAIL line per criterion.
"""

import datetime as dt
import math
import random
import statistics
import time

import pytest

from civicleak.codec import result_to_json
from civicleak.defense import DAY_MS, DefensePolicy, detect_exfiltration, plant_decoys, sanitize_document
from civicleak.docminer import (
    NoiseModel,
    apply_noise,
    evaluate_extraction,
    extract_corpus,
    generate_corpus,
)
from civicleak.harness import config_from_dict, run_pipeline
from civicleak.harvester import (
    AmkaTarget,
    DateOrder,
    DobRecord,
    DobStrategy,
    EngineConfig,
    HarvestPlan,
    OutcomeKind,
    calendar_dates,
    expected_total,
    harvest_amka,
    harvest_trn,
    harvest_voter,
    leak_curve,
    mother_prefixes,
    queries_to_fraction,
    seeds_from_world,
    simulate,
    time_to_fraction,
)
from civicleak.harvester.plans import harvest_stats
from civicleak.harness.report import sample_curve
from civicleak.ident import trn_complete, trn_validate
from civicleak.linkage import link, profile_lines
from civicleak.model import AnnotationKind, Annotation, DocMetadata, Document
from civicleak.population import PopulationConfig, corpus_coverage, female_corpus, generate_world
from civicleak.registry import TABLE1_FIELDS, ErrorKind, Registry
from civicleak.wire import RemoteRegistry, ServiceServer

IDENTIFIERS = (AnnotationKind.ID_CARD, AnnotationKind.TRN, AnnotationKind.AMKA)


def _cat2_trns(world):
    return {t.trn for p in world.persons for t in p.trns if p.category2}


# --- 1 -------------------------------------------------------------------------------


@pytest.mark.criterion(1)
def test_guard_digit_exactly_one_completion():
    rng = random.Random(2024)
    prefixes = [f"{rng.randrange(10**8):08d}" for _ in range(10**4)]
    start = time.perf_counter()
    for prefix in prefixes:
        valid = [d for d in "0123456789" if trn_validate(prefix + d)]
        assert valid == [trn_complete(prefix)[-1]]
    assert time.perf_counter() - start < 1.0


# --- 2 and 13 ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def sweep_world():
    cfg = PopulationConfig(person_count=10_000, seed=1, trn_exponent=5, category2_fraction=0.5)
    return generate_world(cfg)


@pytest.fixture(scope="module")
def sweep_run(sweep_world):
    start = time.perf_counter()
    store = harvest_trn(HarvestPlan(exponent=5), Registry(sweep_world))
    return store, time.perf_counter() - start


@pytest.mark.criterion(2)
def test_exhaustive_sweep(sweep_world, sweep_run):
    store, elapsed = sweep_run
    cat2 = _cat2_trns(sweep_world)
    cat1 = {t.trn for p in sweep_world.persons for t in p.trns if not p.category2}
    assert len(cat2) == len(cat1) == 5_000
    assert store.queries == 10**5
    assert set(store.trn_records) == cat2  # recall 1.000
    assert store.category1 == cat1  # every category-1 number flagged
    cat1_outcomes = [o for o in store.log if o.kind is OutcomeKind.CATEGORY1]
    assert len(cat1_outcomes) == 5_000
    for o in cat1_outcomes:  # response-shape audit
        assert o.result.kind is ErrorKind.CATEGORY1_REFUSAL
        body = result_to_json(o.result)
        assert set(body) == {"type"} and not set(body) & set(TABLE1_FIELDS)
        assert not any(f in o.to_dict()["result"] for f in TABLE1_FIELDS)
    assert elapsed < 30.0


@pytest.mark.criterion(13)
def test_wire_and_in_process_logs_identical(sweep_world, sweep_run):
    local, _ = sweep_run
    with ServiceServer(Registry(sweep_world)) as server:
        remote = RemoteRegistry(server.url)
        try:
            wired = harvest_trn(HarvestPlan(exponent=5), remote)
        finally:
            remote.close()
    assert len(wired.log) == len(local.log) == 10**5
    assert [o.to_dict() for o in wired.log] == [o.to_dict() for o in local.log]


# --- 3 -------------------------------------------------------------------------------


@pytest.mark.criterion(3)
def test_prioritized_sweep_front_loads_yield():
    space = 10**5
    prioritized, uniform = [], []
    for seed in range(10):
        world = generate_world(PopulationConfig(person_count=10_000, seed=seed, trn_exponent=5))
        total = len(_cat2_trns(world))
        reg = Registry(world)
        fast = harvest_trn(HarvestPlan(exponent=5, seed=seed), reg, keep_log=False)
        budget = round(0.31 * space)
        prioritized.append(sum(1 for s in fast.hit_seqs if s < budget) / total)
        flat = harvest_trn(HarvestPlan(exponent=5, ordering="global", seed=seed), reg, keep_log=False)
        uniform.append(queries_to_fraction(flat, total, 0.89) / space)
    assert statistics.mean(prioritized) >= 0.89 - 0.02
    assert abs(statistics.mean(uniform) - 0.89) <= 0.03


# --- 4 -------------------------------------------------------------------------------


@pytest.mark.criterion(4)
def test_voter_bound_and_recall_equals_coverage():
    world = generate_world(PopulationConfig(person_count=600, seed=8, trn_exponent=4))
    keep = set(mother_prefixes(female_corpus())[:10])
    corpus = [n for n in female_corpus() if n[:2].upper() in keep]
    prefixes = mother_prefixes(corpus)
    seeds = seeds_from_world(world)
    store = harvest_voter(seeds, corpus, Registry(world))
    per_target = {}
    for o in store.log:
        per_target[o.query.target] = per_target.get(o.query.target, 0) + 1
    assert max(per_target.values()) <= len(prefixes) * 84
    assert 84 == 1995 - 1912 + 1
    coverage = corpus_coverage(world, corpus)
    assert 0.0 < coverage < 1.0
    assert len(store.voter) / len(seeds) == coverage
    truth = {p.trns[0].trn: p for p in world.persons}
    for key, (v, _) in store.voter.items():
        assert v.electoral_center == truth[key].electoral_center


# --- 5 -------------------------------------------------------------------------------

DECEMBER_HEAVY = tuple([0.5 / 11] * 11 + [0.5])


def _dob_records(world):
    return [(DobRecord(p.id, p.dob.year), p.dob) for p in world.persons]


@pytest.mark.criterion(5)
def test_dob_schedules_equivalent_on_twenty_worlds():
    for seed in range(20):
        recs = _dob_records(generate_world(PopulationConfig(person_count=1000, seed=seed, trn_exponent=5)))
        order = DateOrder(DobStrategy.CALENDAR_REVERSED)
        rank_sum = sum(order.rank(dob) for _, dob in recs)
        reversed_total = len(simulate(recs, DobStrategy.CALENDAR_REVERSED))
        sequential_total = len(simulate(recs, DobStrategy.PER_PERSON_SEQUENTIAL))
        assert reversed_total == rank_sum == sequential_total


@pytest.mark.criterion(5)
def test_engine_totals_match_oracle():
    world = generate_world(PopulationConfig(person_count=1000, seed=0, trn_exponent=5))
    targets = [AmkaTarget(p.id, p.names.first, p.names.last, p.names.father, p.mother, p.dob.year)
               for p in world.persons]
    recs = _dob_records(world)
    reg = Registry(world)
    for strategy in (DobStrategy.CALENDAR_REVERSED, DobStrategy.PER_PERSON_SEQUENTIAL):
        store = harvest_amka(targets, strategy, reg, keep_log=False)
        assert store.queries == expected_total(recs, DobStrategy.CALENDAR_REVERSED)
        assert len(store.amka) == 1000


@pytest.mark.criterion(5)
def test_frequency_order_beats_calendar_on_skewed_births():
    for seed in range(20):
        cfg = PopulationConfig(person_count=1000, seed=seed, trn_exponent=5, month_weights=DECEMBER_HEAVY)
        recs = _dob_records(generate_world(cfg))
        freq = len(simulate(recs, DobStrategy.FREQUENCY_ORDERED, DECEMBER_HEAVY))
        cal = len(simulate(recs, DobStrategy.CALENDAR_REVERSED))
        assert freq == expected_total(recs, DobStrategy.FREQUENCY_ORDERED, DECEMBER_HEAVY)
        assert freq < cal


# --- 6 -------------------------------------------------------------------------------


@pytest.mark.criterion(6)
def test_no_back_to_back_probes_of_one_identity():
    world = generate_world(PopulationConfig(person_count=400, seed=6, trn_exponent=4))
    targets = [AmkaTarget(p.id, p.names.first, p.names.last, p.names.father, p.mother, p.dob.year)
               for p in world.persons]
    # two records with a wrong year keep the schedule busy after everyone else resolved
    p0, p1 = world.persons[:2]
    targets += [AmkaTarget("ghost-a", p0.names.first, p0.names.last, p0.names.father, p0.mother, 1950),
                AmkaTarget("ghost-b", p1.names.first, p1.names.last, p1.names.father, p1.mother, 1951)]
    years = {t.key: t.year for t in targets}
    store = harvest_amka(targets, DobStrategy.CALENDAR_REVERSED, Registry(world))
    resolved, used = set(), {}
    for prev, cur in zip(store.log, store.log[1:]):
        k = prev.query.target
        used[k] = used.get(k, 0) + 1
        if prev.kind is OutcomeKind.HIT:
            resolved.add(k)
        active = [t for t in years if t not in resolved and used.get(t, 0) < len(calendar_dates(years[t]))]
        if len(active) >= 2:
            assert cur.query.target != k
    assert store.queries > 0 and len(store.amka) == 400


# --- 7 -------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def doc_world():
    return generate_world(PopulationConfig(person_count=3000, seed=7, trn_exponent=5))


@pytest.fixture(scope="module")
def clean_corpus(doc_world):
    return generate_corpus(doc_world, 500, seed=0)


@pytest.mark.criterion(7)
def test_extractor_on_clean_corpus(doc_world, clean_corpus):
    report = evaluate_extraction(clean_corpus, extract_corpus(clean_corpus), doc_world)
    card = report[AnnotationKind.ID_CARD]
    assert card.precision >= 0.99 and card.recall >= 0.99
    assert report.name_bound > 0 and report.name_binding_accuracy >= 0.95


@pytest.mark.criterion(7)
def test_recall_non_increasing_with_noise(doc_world):
    levels = (0.0, 0.02, 0.05)
    recalls = {p: [] for p in levels}
    for seed in range(20):
        base = generate_corpus(doc_world, 100, seed=seed)
        for p in levels:
            noisy = apply_noise(base, NoiseModel(p, seed))
            recalls[p].append(evaluate_extraction(noisy, extract_corpus(noisy))[AnnotationKind.ID_CARD].recall)
    means = [statistics.mean(recalls[p]) for p in levels]
    assert means[0] >= means[1] >= means[2]
    assert means[2] < means[0]


# --- 8 -------------------------------------------------------------------------------


@pytest.mark.criterion(8)
def test_sanitized_corpus_leaks_nothing(clean_corpus):
    policy = DefensePolicy()
    once = [sanitize_document(policy, d) for d in clean_corpus]
    report = evaluate_extraction(once, extract_corpus(once))
    for kind in IDENTIFIERS:
        assert report[kind].expected > 0
        assert report[kind].recall == 0.0
    twice = [sanitize_document(policy, d) for d in once]
    assert all(a.text.encode() == b.text.encode() for a, b in zip(once, twice))


@pytest.mark.criterion(8)
def test_sanitized_name_rendering():
    text = "Appointed John Papadopoulos as clerk."
    note = Annotation(10, 27, AnnotationKind.FULL_NAME, "P1", "JOHN PAPADOPOULOS")
    doc = Document("d", text, DocMetadata("a", dt.date(2015, 1, 1), "org"), (note,))
    assert sanitize_document(DefensePolicy(), doc).text == "Appointed J. Papad. as clerk."


# --- 9 -------------------------------------------------------------------------------


@pytest.mark.criterion(9)
def test_single_ip_gets_exactly_the_quota_each_day():
    world = generate_world(PopulationConfig(person_count=500, seed=9, trn_exponent=4))
    store = harvest_trn(HarvestPlan(exponent=4), Registry(world, DefensePolicy(daily_quota=1000)))
    by_day = {}
    for o in store.log:
        by_day.setdefault(o.time // DAY_MS, []).append(o)
    assert sorted(by_day) == list(range(10))
    for day, outs in by_day.items():
        admitted = [o for o in outs if o.kind is not OutcomeKind.DEFENDED]
        assert len(admitted) == 1000
        assert all(o.kind is not OutcomeKind.DEFENDED for o in outs[:1000])
        if day < 9:  # the sweep ends with the last quota slot of day 9
            assert len(outs) == 1001 and outs[1000].defense is ErrorKind.RATE_LIMITED


@pytest.mark.criterion(9)
@pytest.mark.parametrize("partitions, size", [(None, 10**5), (("0", "1", "2", "99"), 31_000)])
def test_ten_ips_complete_in_ceiling_days(sweep_world, partitions, size):
    ips = tuple(f"10.9.0.{i}" for i in range(10))
    plan = HarvestPlan(exponent=5, partitions=partitions, engine=EngineConfig(workers=10, ip_pool=ips))
    store = harvest_trn(plan, Registry(sweep_world, DefensePolicy(daily_quota=1000)), keep_log=False)
    assert store.queries - store.defense_counts["rate-limited"] == size
    last_admitted_day = max(store.hit_times + [store.last_time]) // DAY_MS
    # every worker's final request is admitted, so the last logged time is the last admission
    assert last_admitted_day + 1 == math.ceil(size / (1000 * 10))


# --- 10 ------------------------------------------------------------------------------


def _paced_time_to_90(world, quota, workers):
    ips = tuple(f"10.10.0.{i}" for i in range(workers))
    engine = EngineConfig(workers=workers, ip_pool=ips, query_cost=DAY_MS // quota)
    store = harvest_trn(HarvestPlan(exponent=5, engine=engine), Registry(world, DefensePolicy(daily_quota=quota)),
                        keep_log=False)
    total = len(_cat2_trns(world))
    return store, total, time_to_fraction(store, total, 0.9)


@pytest.mark.criterion(10)
def test_halving_quota_times_ips_doubles_time_to_leak(sweep_world):
    base, total, t_base = _paced_time_to_90(sweep_world, 1000, 10)
    assert base.defense_counts.get("rate-limited", 0) == 0  # paced to the quota, never refused
    curve = leak_curve(base, total)
    assert all(b1 < b2 and f1 <= f2 for (b1, f1), (b2, f2) in zip(curve, curve[1:]))
    sampled = sample_curve(base.hit_seqs, base.queries, total, 50)
    assert all(f1 <= f2 for (_, f1), (_, f2) in zip(sampled, sampled[1:]))
    for quota, workers in ((500, 10), (1000, 5)):
        _, _, t_half = _paced_time_to_90(sweep_world, quota, workers)
        assert t_base > 0 and t_half >= 2 * t_base


# --- 11 ------------------------------------------------------------------------------


@pytest.mark.criterion(11)
def test_decoys_detected_exactly_once_each():
    world = generate_world(PopulationConfig(person_count=2000, seed=11, trn_exponent=5))
    baited, baits = plant_decoys(world, 10, seed=11)
    profiles = link([harvest_trn(HarvestPlan(exponent=5), Registry(baited), keep_log=False)])
    events = detect_exfiltration(baits, profiles + profiles)
    assert len(events) == 10 and {e.subject for e in events} == set(baits)
    assert len(detect_exfiltration(baits, list(profile_lines(profiles)))) == 10
    clean = link([harvest_trn(HarvestPlan(exponent=5), Registry(world), keep_log=False)])
    assert detect_exfiltration(baits, clean) == []


# --- 12 ------------------------------------------------------------------------------


@pytest.mark.criterion(12)
def test_default_end_to_end_scenario():
    cfg = config_from_dict({})
    assert cfg.population.person_count == 10_000 and cfg.defenses == DefensePolicy()
    start = time.perf_counter()
    run = run_pipeline(cfg)
    elapsed = time.perf_counter() - start
    assert corpus_coverage(run.world, cfg.population.names.female) == 1.0
    r = run.report
    assert r.get("linkage", "coverage_trn_voter_amka") >= 0.95
    assert r.get("linkage", "precision") == 1.0
    assert harvest_stats(run.stores["trn"], run.world).recall == 1.0
    assert elapsed < 120.0
