import datetime as dt

import pytest

from civicleak.ident import EnumerationSpace, TrnCategory, amka_infer, trn_validate
from civicleak.population import (
    PopulationConfig,
    PopulationError,
    WorldFileError,
    corpus_coverage,
    dump_world,
    female_corpus,
    generate_world,
    load_world,
    parse_world,
    plant_decoy_persons,
    save_world,
)
from civicleak.text import fold


@pytest.fixture(scope="module")
def world():
    return generate_world(PopulationConfig(person_count=2000, seed=7, trn_exponent=6))


def test_generation_is_deterministic(world):
    again = generate_world(PopulationConfig(person_count=2000, seed=7, trn_exponent=6))
    assert dump_world(world) == dump_world(again)
    other = generate_world(PopulationConfig(person_count=2000, seed=8, trn_exponent=6))
    assert dump_world(world) != dump_world(other)


def test_trns_are_valid_and_unique(world):
    trns = [t.trn for p in world.persons for t in p.trns]
    assert len(trns) == len(set(trns)) == 2000
    assert all(trn_validate(t) for t in trns)
    # exponent 6: trailing two prefix digits are zero
    assert all(t[6:8] == "00" for t in trns)


def test_priority_mass_and_category_counts(world):
    space = EnumerationSpace.prioritized(exponent=6)
    pri = {p for p in ("0", "1", "2", "99")}
    in_pri = sum(
        1 for p in world.persons
        if any(p.trns[0].trn.startswith(x) for x in pri)
    )
    assert in_pri / len(world.persons) >= 0.89
    assert len(space) == 10**6
    assert sum(p.category2 for p in world.persons) == round(0.3 * 2000)
    for p in world.persons:
        for t in p.trns:
            assert (t.category is TrnCategory.CATEGORY2) == (t.business is not None)


def test_amka_encodes_dob_and_sex(world):
    amkas = [p.amka for p in world.persons]
    assert len(set(amkas)) == len(amkas)
    for p in world.persons:
        dob, sex = amka_infer(p.amka, world.amka_pivot)
        assert dob == p.dob and sex == p.sex
        assert 1912 <= p.dob.year <= 1995


def test_unique_name_triples_and_cards(world):
    triples = {(fold(p.names.first), fold(p.names.last), fold(p.names.father)) for p in world.persons}
    assert len(triples) == len(world.persons)
    cards = [c for p in world.persons for c in p.id_cards]
    assert len(cards) == len(set(cards))


def test_world_file_round_trip_is_byte_identical(world, tmp_path):
    path = tmp_path / "w.jsonl"
    save_world(world, path)
    loaded = load_world(path)
    assert loaded.persons == world.persons
    assert dump_world(loaded) == path.read_text(encoding="utf-8")


def test_truncated_world_file_is_rejected(world):
    text = dump_world(world)
    with pytest.raises(WorldFileError):
        parse_world(text[: len(text) // 2])
    with pytest.raises(WorldFileError):
        parse_world(text.rstrip("\n"))
    lines = text.splitlines(keepends=True)
    with pytest.raises(WorldFileError):
        parse_world("".join(lines[:-1]))


def test_world_file_rejects_future_version(world):
    text = dump_world(world).replace('"version":1', '"version":99', 1)
    with pytest.raises(WorldFileError, match="version"):
        parse_world(text)


def test_bad_config_rejected():
    with pytest.raises(PopulationError):
        PopulationConfig(priority_mass=1.5)
    with pytest.raises(PopulationError):
        PopulationConfig(trn_exponent=0)
    with pytest.raises(PopulationError):
        PopulationConfig.from_dict({"bogus": 1})


def test_config_dict_round_trip():
    cfg = PopulationConfig(person_count=5, month_weights=tuple(range(1, 13)))
    assert PopulationConfig.from_dict(cfg.to_dict()) == cfg


def test_corpus_coverage(world):
    assert corpus_coverage(world, female_corpus()) == 1.0
    half = corpus_coverage(world, ["MARIA"])
    share = sum(fold(p.mother).startswith("MA") for p in world.persons) / len(world.persons)
    assert half == pytest.approx(share)
    with pytest.raises(ValueError):
        corpus_coverage(world, [])


def test_decoys_are_fresh_and_flagged(world):
    w2, decoys = plant_decoy_persons(world, 10, seed=1)
    assert len(decoys) == 10 and all(d.is_decoy and d.category2 for d in decoys)
    used = {t.trn for p in world.persons for t in p.trns}
    assert not used & {d.trns[0].trn for d in decoys}
    # coverage ignores decoys
    assert corpus_coverage(w2, female_corpus()) == 1.0


def test_leap_day_births_exist_across_seeds():
    w = generate_world(PopulationConfig(person_count=3000, seed=3, trn_exponent=6))
    assert any(p.dob.month == 2 and p.dob.day == 29 for p in w.persons)
    assert all(isinstance(p.dob, dt.date) for p in w.persons)
