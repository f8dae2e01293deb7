"""Deterministic synthetic population and the versioned world file."""

from __future__ import annotations

import bisect
import calendar
import datetime as dt
import hashlib
import itertools
import json
import random
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

from .ident import (
    GREEK_UPPER,
    PRIORITY_PREFIXES,
    EnumerationSpace,
    IdCardNumber,
    IdentifierFormatError,
    Sex,
    TrnCategory,
    amka_compose,
    trn_at,
)
from .model import (
    Address,
    Annotation,
    AnnotationKind,
    BusinessInfo,
    DocMetadata,
    Document,
    NameTriple,
    Person,
    TrnAssignment,
    World,
)
from .text import fold

WORLD_FORMAT = "civicleak-world"
WORLD_VERSION = 1


class PopulationError(ValueError):
    """Invalid population configuration or unsatisfiable generation request."""


class CapacityError(PopulationError):
    """More identifiers requested than the configured space can hold."""


class WorldFileError(Exception):
    """A world file could not be read back."""


@lru_cache(maxsize=None)
def _bundled(name: str) -> tuple[str, ...]:
    text = resources.files("civicleak.data").joinpath(name).read_text(encoding="utf-8")
    return tuple(line.strip() for line in text.splitlines() if line.strip())


@dataclass(frozen=True)
class NameCorpora:
    male: tuple[str, ...]
    female: tuple[str, ...]
    surnames: tuple[str, ...]

    @classmethod
    def bundled(cls) -> NameCorpora:
        return cls(_bundled("male_first.txt"), _bundled("female_first.txt"), _bundled("surnames.txt"))

    @classmethod
    def from_files(cls, male: str | Path, female: str | Path, surnames: str | Path) -> NameCorpora:
        def read(p):
            return tuple(fold(x) for x in Path(p).read_text(encoding="utf-8").split() if x.strip())

        return cls(read(male), read(female), read(surnames))


def female_corpus() -> tuple[str, ...]:
    return NameCorpora.bundled().female


@dataclass(frozen=True)
class PopulationConfig:
    person_count: int = 10_000
    seed: int = 0
    trn_exponent: int = 8
    priority_prefixes: tuple[str, ...] = PRIORITY_PREFIXES
    priority_mass: float = 0.9
    category2_fraction: float = 0.3
    ex_business_fraction: float = 0.1
    month_weights: tuple[float, ...] | None = None
    year_range: tuple[int, int] = (1912, 1995)
    unique_names: bool = True
    card_stop_probability: float = 0.7
    corpora: NameCorpora | None = None

    def __post_init__(self) -> None:
        if self.person_count < 0:
            raise PopulationError("person_count must be non-negative")
        if not 1 <= self.trn_exponent <= 8:
            raise PopulationError("trn_exponent must be between 1 and 8")
        for name in ("priority_mass", "category2_fraction", "ex_business_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise PopulationError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.card_stop_probability <= 1.0:
            raise PopulationError("card_stop_probability must lie in (0, 1]")
        lo, hi = self.year_range
        if lo > hi:
            raise PopulationError("year_range is empty")
        if hi - lo >= 100:
            raise PopulationError("year_range must fit in one AMKA century window")
        if self.month_weights is not None:
            if len(self.month_weights) != 12 or min(self.month_weights) < 0 or sum(self.month_weights) <= 0:
                raise PopulationError("month_weights needs 12 non-negative weights with positive sum")
        for p in self.priority_prefixes:
            if not p.isdigit() or len(p) > self.trn_exponent:
                raise PopulationError(f"priority prefix {p!r} does not fit a 10^{self.trn_exponent} space")

    @property
    def amka_pivot(self) -> int:
        return self.year_range[0] % 100

    @property
    def names(self) -> NameCorpora:
        return self.corpora or NameCorpora.bundled()

    def to_dict(self) -> dict[str, Any]:
        return {
            "person_count": self.person_count,
            "seed": self.seed,
            "trn_exponent": self.trn_exponent,
            "priority_prefixes": list(self.priority_prefixes),
            "priority_mass": self.priority_mass,
            "category2_fraction": self.category2_fraction,
            "ex_business_fraction": self.ex_business_fraction,
            "month_weights": list(self.month_weights) if self.month_weights else None,
            "year_range": list(self.year_range),
            "unique_names": self.unique_names,
            "card_stop_probability": self.card_stop_probability,
            "corpora": None if self.corpora is None else {
                "male": list(self.corpora.male),
                "female": list(self.corpora.female),
                "surnames": list(self.corpora.surnames),
            },
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PopulationConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise PopulationError(f"unknown population keys: {sorted(unknown)}")
        kw = dict(data)
        for key in ("priority_prefixes", "year_range", "month_weights"):
            if kw.get(key) is not None:
                kw[key] = tuple(kw[key])
        if kw.get("corpora") is not None:
            c = kw["corpora"]
            kw["corpora"] = NameCorpora(tuple(c["male"]), tuple(c["female"]), tuple(c["surnames"]))
        return cls(**kw)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# --- small vocabularies for business metadata ----------------------------------

CITIES = (
    "Athens", "Thessaloniki", "Patras", "Heraklion", "Larissa", "Volos", "Ioannina",
    "Chania", "Kavala", "Serres", "Kalamata", "Rhodes", "Chalkida", "Trikala",
    "Lamia", "Katerini", "Xanthi", "Komotini", "Kozani", "Veria", "Corfu", "Drama",
    "Agrinio", "Alexandroupoli", "Tripoli", "Piraeus", "Peristeri", "Kallithea",
)
STREETS = (
    "Ermou", "Stadiou", "Panepistimiou", "Akadimias", "Patision", "Solonos",
    "Tsimiski", "Egnatia", "Agiou Nikolaou", "Eleftheriou Venizelou", "Kifisias",
    "Syngrou", "Athinas", "Mitropoleos", "Vasilissis Sofias", "Ipsilantou",
)
ACTIVITIES = (
    "Retail trade of clothing", "Legal services", "Accounting and tax consulting",
    "Restaurant services", "Building construction", "Medical practice",
    "Software development", "Freight transport by road", "Hairdressing",
    "Real estate agency", "Dental practice", "Engineering consultancy",
    "Bakery products", "Taxi operation", "Wholesale of fruit and vegetables",
)
TITLE_SUFFIXES = ("& Co", "Services", "Trading", "Consulting", "Studio", "Workshop", "Ltd")
ORDINALS = ("A'", "B'", "C'", "D'", "E'")


def electoral_centers() -> tuple[str, ...]:
    return tuple(
        f"{n}th Primary School of {city}" for city in CITIES for n in range(1, 11)
    )


# --- generation -----------------------------------------------------------


def _zipf_cum(n: int) -> list[float]:
    return list(itertools.accumulate(1.0 / (k + 1) for k in range(n)))


def _sample_from_intervals(rng: random.Random, intervals: Sequence[tuple[int, int]], k: int) -> list[int]:
    sizes = [b - a for a, b in intervals]
    total = sum(sizes)
    if k > total:
        raise CapacityError(f"need {k} numbers but the region holds {total}")
    starts = list(itertools.accumulate([0] + sizes[:-1]))
    out = []
    for off in rng.sample(range(total), k):
        i = bisect.bisect_right(starts, off) - 1
        out.append(intervals[i][0] + off - starts[i])
    return out


def trn_regions(cfg: PopulationConfig) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """(priority, remainder) index intervals of the configured TRN space."""
    space = EnumerationSpace.prioritized(cfg.trn_exponent, cfg.priority_prefixes)
    pri = [iv for p in cfg.priority_prefixes for iv in space.intervals(p)]
    rest = [iv for p in space.partitions if p not in cfg.priority_prefixes for iv in space.intervals(p)]
    return sorted(pri), sorted(rest)


def _allocate_trns(rng: random.Random, cfg: PopulationConfig, count: int) -> list[str]:
    pri, rest = trn_regions(cfg)
    n_pri = round(cfg.priority_mass * count)
    try:
        picked = _sample_from_intervals(rng, pri, n_pri) + _sample_from_intervals(rng, rest, count - n_pri)
    except CapacityError as exc:
        raise CapacityError(f"cannot register {count} TRNs in a 10^{cfg.trn_exponent} space: {exc}") from None
    rng.shuffle(picked)
    return [trn_at(i, cfg.trn_exponent) for i in picked]


def _draw_dob(rng: random.Random, cfg: PopulationConfig) -> dt.date:
    year = rng.randint(*cfg.year_range)
    if cfg.month_weights is None:
        days = 366 if calendar.isleap(year) else 365
        return dt.date(year, 1, 1) + dt.timedelta(days=rng.randrange(days))
    month = rng.choices(range(1, 13), weights=cfg.month_weights)[0]
    return dt.date(year, month, rng.randint(1, calendar.monthrange(year, month)[1]))


class _Drawer:
    """Stateful helpers for one generation run."""

    def __init__(self, cfg: PopulationConfig, rng: random.Random):
        self.cfg = cfg
        self.rng = rng
        corp = cfg.names
        self.corp = corp
        self.cum_male = _zipf_cum(len(corp.male))
        self.cum_female = _zipf_cum(len(corp.female))
        self.triples: set[tuple[str, str, str]] = set()
        self.cards: set[IdCardNumber] = set()
        self.amka_heads: dict[str, set[str]] = {}
        self.centers = electoral_centers()

    def names(self, sex: Sex) -> tuple[NameTriple, str]:
        rng, corp = self.rng, self.corp
        for _ in range(10_000):
            if sex is Sex.MALE:
                first = rng.choices(corp.male, cum_weights=self.cum_male)[0]
            else:
                first = rng.choices(corp.female, cum_weights=self.cum_female)[0]
            last = rng.choice(corp.surnames)
            father = rng.choices(corp.male, cum_weights=self.cum_male)[0]
            mother = rng.choices(corp.female, cum_weights=self.cum_female)[0]
            key = (fold(first), fold(last), fold(father))
            if self.cfg.unique_names and key in self.triples:
                continue
            self.triples.add(key)
            return NameTriple(first, last, father), mother
        raise CapacityError("could not draw a unique name triple; corpora too small")

    def card(self) -> IdCardNumber:
        while True:
            letters = "".join(self.rng.choice(GREEK_UPPER) for _ in range(self.rng.choice((1, 2))))
            card = IdCardNumber(letters, f"{self.rng.randrange(10**6):06d}")
            if card not in self.cards:
                self.cards.add(card)
                return card

    def cards_for(self) -> tuple[IdCardNumber, ...]:
        n = 1
        while self.rng.random() >= self.cfg.card_stop_probability:
            n += 1
        return tuple(self.card() for _ in range(n))

    def amka(self, dob: dt.date, sex: Sex) -> str:
        while True:
            seq = self.rng.randrange(10_000)
            head = f"{dob.day:02d}{dob.month:02d}{dob.year % 100:02d}{seq:04d}"
            taken = self.amka_heads.setdefault(head, set())
            try:
                amka = amka_compose(dob, seq, sex, taken, pivot=self.cfg.amka_pivot)
            except IdentifierFormatError:
                continue
            taken.add(amka)
            return amka

    def business(self, names: NameTriple, dob: dt.date, ex: bool) -> BusinessInfo:
        rng = self.rng
        city = rng.choice(CITIES)
        start_year = min(max(dob.year + 18, 1960), 2013)
        reg = dt.date(rng.randint(start_year, 2013), rng.randint(1, 12), rng.randint(1, 28))
        stop = reg + dt.timedelta(days=rng.randint(200, 4000)) if ex else None
        if stop and stop > dt.date(2014, 12, 31):
            stop = dt.date(2014, 12, 31)
        return BusinessInfo(
            commercial_title=f"{names.last.title()} {rng.choice(TITLE_SUFFIXES)}",
            address=Address(rng.choice(STREETS), str(rng.randint(1, 250)),
                            f"{rng.randint(10000, 85999)}", city),
            registration_date=reg,
            stop_date=stop,
            phone=f"2{rng.randrange(10**9):09d}",
            fax=f"2{rng.randrange(10**9):09d}",
            activity=rng.choice(ACTIVITIES),
            physical_entity=rng.random() < 0.85,
            tax_bureau=f"{rng.choice(ORDINALS)} Tax Office of {city}",
        )

    def person(self, pid: str, trn: str, cat2: bool, ex: bool, decoy: bool = False) -> Person:
        rng = self.rng
        sex = Sex.MALE if rng.random() < 0.5 else Sex.FEMALE
        names, mother = self.names(sex)
        dob = _draw_dob(rng, self.cfg)
        business = self.business(names, dob, ex) if cat2 else None
        assignment = TrnAssignment(
            trn,
            TrnCategory.CATEGORY2 if cat2 else TrnCategory.CATEGORY1,
            active=not ex,
            business=business,
        )
        center = rng.choice(self.centers)
        city = center.rsplit(" of ", 1)[1]
        return Person(
            id=pid,
            names=names,
            mother=mother,
            dob=dob,
            sex=sex,
            trns=(assignment,),
            id_cards=self.cards_for(),
            amka=self.amka(dob, sex),
            electoral_center=center,
            registrar_info=f"Municipality of {city}, registry no. {rng.randint(1, 9999)}",
            is_decoy=decoy,
        )

    def absorb(self, persons: Iterable[Person]) -> None:
        for p in persons:
            self.triples.add((fold(p.names.first), fold(p.names.last), fold(p.names.father)))
            self.cards.update(p.id_cards)
            self.amka_heads.setdefault(p.amka[:10], set()).add(p.amka)


def generate_world(config: PopulationConfig) -> World:
    """Generate a world; equal configs give equal worlds."""
    rng = random.Random(f"population/{config.seed}")
    n = config.person_count
    trns = _allocate_trns(rng, config, n)
    cat2 = set(rng.sample(range(n), round(config.category2_fraction * n)))
    cat2_sorted = sorted(cat2)
    ex = set(rng.sample(cat2_sorted, round(config.ex_business_fraction * len(cat2_sorted))))
    drawer = _Drawer(config, rng)
    persons = tuple(
        drawer.person(f"P{i:07d}", trns[i], i in cat2, i in ex) for i in range(n)
    )
    return World(config=config, persons=persons)


def plant_decoy_persons(world: World, n: int, seed: int) -> tuple[World, list[Person]]:
    """Add ``n`` category-2 decoy persons with unused, valid identifiers."""
    cfg = world.config
    rng = random.Random(f"decoys/{seed}")
    used = {t.trn for p in world.persons for t in p.trns}
    pri, rest = trn_regions(cfg)
    pool = pri + rest
    drawer = _Drawer(cfg, rng)
    drawer.absorb(world.persons)
    start = sum(1 for p in world.persons if p.is_decoy)
    decoys = []
    for k in range(n):
        for _ in range(1000):
            trn = trn_at(_sample_from_intervals(rng, pool, 1)[0], cfg.trn_exponent)
            if trn not in used:
                used.add(trn)
                break
        else:
            raise CapacityError("no free TRN left for a decoy")
        decoys.append(drawer.person(f"D{start + k:07d}", trn, cat2=True, ex=False, decoy=True))
    return replace(world, persons=world.persons + tuple(decoys)), decoys


def corpus_coverage(world: World, female_names: Iterable[str]) -> float:
    """Fraction of persons whose mother's name starts with a corpus 2-letter prefix."""
    prefixes = {fold(n)[:2] for n in female_names if len(fold(n)) >= 2}
    if not prefixes:
        raise ValueError("female name corpus is empty")
    persons = [p for p in world.persons if not p.is_decoy]
    if not persons:
        return 0.0
    return sum(fold(p.mother)[:2] in prefixes for p in persons) / len(persons)


# --- world file -------------------------------------------------------------


def _d(value: dt.date | None) -> str | None:
    return value.isoformat() if value else None


def _date(value: str | None) -> dt.date | None:
    return dt.date.fromisoformat(value) if value else None


def person_to_dict(p: Person) -> dict[str, Any]:
    def trn_dict(t: TrnAssignment) -> dict[str, Any]:
        b = t.business
        return {
            "trn": t.trn,
            "category": t.category.value,
            "active": t.active,
            "business": None if b is None else {
                "commercial_title": b.commercial_title,
                "address": [b.address.street, b.address.number, b.address.postal_code, b.address.city],
                "registration_date": _d(b.registration_date),
                "stop_date": _d(b.stop_date),
                "phone": b.phone,
                "fax": b.fax,
                "activity": b.activity,
                "physical_entity": b.physical_entity,
                "tax_bureau": b.tax_bureau,
            },
        }

    return {
        "type": "person",
        "id": p.id,
        "names": [p.names.first, p.names.last, p.names.father],
        "mother": p.mother,
        "dob": _d(p.dob),
        "sex": p.sex.value,
        "trns": [trn_dict(t) for t in p.trns],
        "id_cards": [str(c) for c in p.id_cards],
        "amka": p.amka,
        "electoral_center": p.electoral_center,
        "registrar_info": p.registrar_info,
        "is_decoy": p.is_decoy,
    }


def person_from_dict(d: dict[str, Any]) -> Person:
    def trn_obj(t: dict[str, Any]) -> TrnAssignment:
        b = t["business"]
        business = None if b is None else BusinessInfo(
            commercial_title=b["commercial_title"],
            address=Address(*b["address"]),
            registration_date=_date(b["registration_date"]),
            stop_date=_date(b["stop_date"]),
            phone=b["phone"],
            fax=b["fax"],
            activity=b["activity"],
            physical_entity=b["physical_entity"],
            tax_bureau=b["tax_bureau"],
        )
        return TrnAssignment(t["trn"], TrnCategory(t["category"]), t["active"], business)

    return Person(
        id=d["id"],
        names=NameTriple(*d["names"]),
        mother=d["mother"],
        dob=_date(d["dob"]),
        sex=Sex(d["sex"]),
        trns=tuple(trn_obj(t) for t in d["trns"]),
        id_cards=tuple(IdCardNumber(c[:-6], c[-6:]) for c in d["id_cards"]),
        amka=d["amka"],
        electoral_center=d["electoral_center"],
        registrar_info=d["registrar_info"],
        is_decoy=d["is_decoy"],
    )


def document_to_dict(doc: Document) -> dict[str, Any]:
    return {
        "type": "document",
        "id": doc.id,
        "template": doc.template,
        "metadata": [doc.metadata.author, _d(doc.metadata.modification_date), doc.metadata.publishing_org],
        "text": doc.text,
        "annotations": [
            [a.start, a.end, a.kind.value, a.person_id, a.value, a.sanitized] for a in doc.annotations
        ],
    }


def document_from_dict(d: dict[str, Any]) -> Document:
    author, mdate, org = d["metadata"]
    return Document(
        id=d["id"],
        text=d["text"],
        metadata=DocMetadata(author, _date(mdate), org),
        annotations=tuple(
            Annotation(s, e, AnnotationKind(k), pid, v, bool(san)) for s, e, k, pid, v, san in d["annotations"]
        ),
        template=d["template"],
    )


def _line(obj: dict[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def dump_world(world: World) -> str:
    header = {
        "format": WORLD_FORMAT,
        "version": WORLD_VERSION,
        "seed": world.config.seed,
        "config_hash": world.config.digest(),
        "persons": len(world.persons),
        "documents": len(world.documents),
        "config": world.config.to_dict(),
    }
    lines = [_line(header)]
    lines += [_line(person_to_dict(p)) for p in world.persons]
    lines += [_line(document_to_dict(d)) for d in world.documents]
    return "\n".join(lines) + "\n"


def parse_world(text: str) -> World:
    lines = text.split("\n")
    if not text.endswith("\n"):
        raise WorldFileError("world file is truncated (missing final newline)")
    lines = lines[:-1]
    if not lines:
        raise WorldFileError("world file is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise WorldFileError(f"line 1: bad header: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != WORLD_FORMAT:
        raise WorldFileError("line 1: not a civicleak world file")
    if header.get("version") != WORLD_VERSION:
        raise WorldFileError(f"unsupported world format version {header.get('version')!r}; expected {WORLD_VERSION}")
    try:
        config = PopulationConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise WorldFileError(f"line 1: bad config block: {exc}") from None
    if config.digest() != header.get("config_hash"):
        raise WorldFileError("config hash mismatch in header")
    persons, docs = [], []
    for n, raw in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(raw)
            kind = rec["type"]
            if kind == "person":
                persons.append(person_from_dict(rec))
            elif kind == "document":
                docs.append(document_from_dict(rec))
            else:
                raise WorldFileError(f"line {n}: unknown record type {kind!r}")
        except WorldFileError:
            raise
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise WorldFileError(f"line {n}: {type(exc).__name__}: {exc}") from None
    if len(persons) != header.get("persons") or len(docs) != header.get("documents"):
        raise WorldFileError(
            f"record count mismatch: header says {header.get('persons')} persons/"
            f"{header.get('documents')} documents, file has {len(persons)}/{len(docs)}"
        )
    return World(config=config, persons=tuple(persons), documents=tuple(docs))


def save_world(world: World, path: str | Path) -> None:
    Path(path).write_text(dump_world(world), encoding="utf-8")


def load_world(path: str | Path) -> World:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise WorldFileError(f"{path}: not UTF-8: {exc}") from None
    return parse_world(text)
