import dataclasses
import datetime as dt
import random

import pytest

from civicleak.defense import DefensePolicy
from civicleak.ident import TrnCategory, trn_at, trn_validate
from civicleak.population import PopulationConfig, generate_world
from civicleak.registry import (
    TABLE1_FIELDS,
    ErrorKind,
    Registry,
    RequestContext,
    ServiceError,
    TrnRecord,
    VoterResult,
)
from civicleak.text import fold, to_greek

CTX = RequestContext("10.0.0.1", 0)


@pytest.fixture(scope="module")
def world():
    return generate_world(PopulationConfig(person_count=400, seed=11, trn_exponent=4, category2_fraction=0.5))


@pytest.fixture(scope="module")
def reg(world):
    return Registry(world)


def test_trn_examples(world, reg):
    cat2 = next(p for p in world.persons if p.category2)
    rec = reg.trn_lookup(CTX, cat2.trns[0].trn)
    assert isinstance(rec, TrnRecord)
    assert rec.last_name == cat2.names.last
    assert all(getattr(rec, f) is not None for f in TABLE1_FIELDS if f != "stop_date")
    assert (rec.stop_date is None) == (rec.business_indicator.value == "business")
    cat1 = next(p for p in world.persons if not p.category2)
    assert reg.trn_lookup(CTX, cat1.trns[0].trn).kind is ErrorKind.CATEGORY1_REFUSAL
    assert reg.trn_lookup(CTX, "000000001").kind is ErrorKind.INVALID_FORMAT
    assert reg.trn_lookup(CTX, "abc").kind is ErrorKind.INVALID_FORMAT


def test_trn_oracle_over_whole_space(world, reg):
    truth = {t.trn: t for p in world.persons for t in p.trns}
    for i in range(10**4):
        trn = trn_at(i, 4)
        r = reg.trn_lookup(CTX, trn)
        t = truth.get(trn)
        if t is None:
            assert r.kind is ErrorKind.UNREGISTERED
        elif t.category is TrnCategory.CATEGORY1:
            assert r.kind is ErrorKind.CATEGORY1_REFUSAL
        else:
            assert isinstance(r, TrnRecord) and r.trn == trn


def _oracle_voter(world, first, last, father, mother, year):
    hits = [
        p for p in world.persons
        if fold(p.names.last) == fold(last) and p.dob.year == year
        and fold(p.names.first).startswith(fold(first))
        and fold(p.names.father).startswith(fold(father))
        and fold(p.mother).startswith(fold(mother))
    ]
    return hits[0] if len(hits) == 1 else None


def test_voter_oracle_and_examples(world, reg):
    rng = random.Random(3)
    for p in rng.sample(world.persons, 60):
        for year in (p.dob.year, p.dob.year + 1):
            for cut in (2, 3, 99):
                args = (p.names.first[:cut], p.names.last, p.names.father[:cut], p.mother[:cut], year)
                got = reg.voter_search(CTX, *args)
                want = _oracle_voter(world, *args)
                if want is None:
                    assert got.kind is ErrorKind.NOT_FOUND
                else:
                    assert got == VoterResult(want.electoral_center, want.registrar_info, want.mother, year)
    p = world.persons[0]
    assert reg.voter_search(CTX, p.names.first, p.names.last, p.names.father, "X", p.dob.year).kind \
        is ErrorKind.INVALID_FORMAT
    greek = reg.voter_search(CTX, to_greek(p.names.first)[:2], to_greek(p.names.last).lower(),
                             to_greek(p.names.father), to_greek(p.mother), p.dob.year)
    assert isinstance(greek, VoterResult)


def test_voter_ambiguity_modes():
    w = generate_world(PopulationConfig(person_count=300, seed=2, trn_exponent=4))
    a = w.persons[0]
    twin = dataclasses.replace(w.persons[1], names=a.names, mother=a.mother, dob=a.dob.replace(day=1),
                               id=w.persons[1].id)
    w2 = dataclasses.replace(w, persons=(a, twin) + w.persons[2:])
    args = (a.names.first, a.names.last, a.names.father, a.mother, a.dob.year)
    assert Registry(w2).voter_search(CTX, *args).kind is ErrorKind.NOT_FOUND
    assert isinstance(Registry(w2, voter_mode="first-match").voter_search(CTX, *args), VoterResult)


def test_amka_semantics(world, reg):
    p = world.persons[5]
    names = (p.names.first, p.names.last, p.names.father, p.mother)
    assert reg.amka_search(CTX, *names, p.dob) == p.amka
    assert reg.amka_search(CTX, *names, p.dob.year).kind is ErrorKind.NEEDS_MORE_INFO
    assert reg.amka_search(CTX, *names, p.dob.year, trn=p.trns[0].trn) == p.amka
    assert reg.amka_search(CTX, *names, p.dob.year, id_card=p.current_card.render()) == p.amka
    other = world.persons[6]
    assert reg.amka_search(CTX, *names, p.dob.year, trn=other.trns[0].trn).kind is ErrorKind.NOT_FOUND
    off = (p.names.first[:-1] + "Z",) + names[1:]
    assert reg.amka_search(CTX, *off, p.dob).kind is ErrorKind.NOT_FOUND
    wrong_day = p.dob + dt.timedelta(days=1)
    assert reg.amka_search(CTX, *names, wrong_day).kind is ErrorKind.NOT_FOUND
    assert reg.amka_search(CTX, "", *names[1:], p.dob).kind is ErrorKind.INVALID_FORMAT


def test_zero_leak_on_every_refusal(world):
    """Randomised probes: no error response carries personal data."""
    reg = Registry(world, DefensePolicy(daily_quota=50, captcha_after=30))
    rng = random.Random(0)
    secrets = set()
    for p in world.persons:
        secrets |= {p.amka, p.electoral_center, p.names.last, p.mother}
    for i in range(2000):
        p = rng.choice(world.persons)
        ip = f"ip{rng.randrange(3)}"
        c = RequestContext(ip, i * 1000)
        r = rng.choice([
            lambda: reg.trn_lookup(c, p.trns[0].trn),
            lambda: reg.trn_lookup(c, trn_at(rng.randrange(10**4), 4)),
            lambda: reg.voter_search(c, p.names.first[:2], p.names.last, p.names.father[:2], "ZZ", 1950),
            lambda: reg.amka_search(c, p.names.first, p.names.last, p.names.father, p.mother, p.dob.year),
        ])()
        if isinstance(r, ServiceError):
            blob = repr(r)
            assert not any(s in blob for s in secrets)
            assert set(vars(r)) == {"kind", "retry_after", "challenge", "detail"}


def test_documents_search_and_fetch():
    from civicleak.docminer import generate_corpus

    w = generate_world(PopulationConfig(person_count=200, seed=1, trn_exponent=4))
    w = dataclasses.replace(w, documents=tuple(generate_corpus(w, 30, seed=1)))
    reg = Registry(w)
    ids = reg.doc_search(CTX, "ΑΔΤ")
    assert ids and all("ΑΔΤ" in reg.doc_fetch(CTX, i).text for i in ids)
    assert reg.doc_search(CTX, "no-such-term-anywhere") == []
    assert reg.doc_fetch(CTX, "missing").kind is ErrorKind.NOT_FOUND
    assert not hasattr(reg.doc_fetch(CTX, ids[0]), "annotations")


def test_trn_validate_agrees_with_invalid_format(reg):
    for s in ["12345678", "1234567890", "12345678X", "", "000000000"]:
        r = reg.trn_lookup(CTX, s)
        assert (r.kind is ErrorKind.INVALID_FORMAT) == (not trn_validate(s))
