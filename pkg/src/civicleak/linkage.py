"""Profile assembly: join harvested fragments into per-person profiles.

Every harvested record becomes a fragment. Fragments are merged with a
union-find under a fixed sequence of exact-key join rules; before each union
the two components are checked for consistency (names, mother, birth year,
date of birth, the date embedded in an AMKA) and an inconsistent merge is
skipped and logged instead of performed.
"""

from __future__ import annotations

import datetime as dt
import enum
import json
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .codec import trn_record_from_json, trn_record_to_json
from .harvester.store import ResultStore
from .model import AnnotationKind, Document, World
from .registry import TrnRecord
from .text import fold

log = logging.getLogger(__name__)

PROFILE_FORMAT = "civicleak-profiles"
PROFILE_VERSION = 1

SLOTS = ("trn", "amka", "id_card", "full_dob", "mother_name", "electoral_center", "business_record")


class JoinRule(enum.Enum):
    """Exact-key joins; each declares its key and leaves ambiguous keys unmerged."""

    BY_EXACT_IDENTIFIER = "by-exact-identifier"  # any shared TRN, AMKA or card number
    BY_NAME_TRIPLE_YEAR = "by-name-triple-year"  # voter hit <-> TRN record
    BY_AMKA_DOB = "by-amka-dob"  # AMKA hit <-> voter hit on (triple, mother, year)
    BY_EXTRACTED_NAME = "by-extracted-name"  # document hit <-> TRN record on the full name triple

    @classmethod
    def parse(cls, value: JoinRule | str) -> JoinRule:
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown join rule {value!r}") from None


DEFAULT_RULES = tuple(JoinRule)

_SOURCE_ORDER = {"trn": 0, "voter": 1, "amka": 2, "doc": 3}


@dataclass(frozen=True)
class Fragment:
    source: str
    ref: str
    trns: frozenset[str] = frozenset()
    amkas: frozenset[str] = frozenset()
    cards: frozenset[str] = frozenset()
    first: str | None = None
    last: str | None = None
    father: str | None = None
    mother: str | None = None
    year: int | None = None
    dob: dt.date | None = None
    electoral_center: str | None = None
    business: TrnRecord | None = None

    @property
    def sort_key(self) -> tuple:
        return (_SOURCE_ORDER[self.source], self.ref)

    @property
    def triple(self) -> tuple[str, str, str] | None:
        if self.first and self.last and self.father:
            return (self.first, self.last, self.father)
        return None


def _fragments_from_store(store: ResultStore) -> Iterable[Fragment]:
    for trn, r in store.trn_records.items():
        yield Fragment("trn", trn, trns=frozenset({trn}), first=fold(r.first_name), last=fold(r.last_name),
                       father=fold(r.father_name), business=r)
    for target, (v, q) in store.voter.items():
        first, last, father = q.args[0], q.args[1], q.args[2]
        yield Fragment("voter", f"{target}/{v.birth_year}", first=fold(first), last=fold(last),
                       father=fold(father), mother=fold(v.mother_name), year=v.birth_year,
                       electoral_center=v.electoral_center)
    for target, (amka, q) in store.amka.items():
        first, last, father, mother, dob = q.args[:5]
        yield Fragment("amka", target, amkas=frozenset({amka}), first=fold(first), last=fold(last),
                       father=fold(father), mother=fold(mother), year=dob.year, dob=dob)


def _fragments_from_hits(hits: Iterable[Any]) -> Iterable[Fragment]:
    """Hits on one line of one document describe one person."""
    groups: dict[tuple[str, int], list[Any]] = {}
    for h in hits:
        groups.setdefault((h.doc_id, h.line), []).append(h)
    for (doc_id, line), hs in groups.items():
        ids: dict[AnnotationKind, set[str]] = {k: set() for k in AnnotationKind}
        name = None
        for h in hs:
            ids[h.kind].add(h.value)
            if h.name is not None and name is None:
                name = h.name
        yield Fragment(
            "doc", f"{doc_id}:{line:06d}",
            trns=frozenset(ids[AnnotationKind.TRN]), amkas=frozenset(ids[AnnotationKind.AMKA]),
            cards=frozenset(ids[AnnotationKind.ID_CARD]),
            first=name.first if name else None, last=name.last if name else None,
            father=name.father if name else None,
        )


# --- components ---------------------------------------------------------------


@dataclass
class _Component:
    trns: set[str] = field(default_factory=set)
    amkas: set[str] = field(default_factory=set)
    cards: set[str] = field(default_factory=set)
    first: str | None = None
    last: str | None = None
    father: str | None = None
    mother: str | None = None
    year: int | None = None
    dob: dt.date | None = None
    electoral_center: str | None = None
    business: TrnRecord | None = None
    sources: set[str] = field(default_factory=set)
    refs: list[str] = field(default_factory=list)

    @classmethod
    def of(cls, f: Fragment) -> _Component:
        return cls(set(f.trns), set(f.amkas), set(f.cards), f.first, f.last, f.father, f.mother,
                   f.year if f.year is not None else (f.dob.year if f.dob else None), f.dob,
                   f.electoral_center, f.business, {f.source}, [f.ref])


def _clash(a: Any, b: Any) -> bool:
    return a is not None and b is not None and a != b


def _amka_matches(amka: str, dob: dt.date) -> bool:
    return amka[:6] == dob.strftime("%d%m%y")


def conflict_reason(a: _Component, b: _Component) -> str | None:
    """Why ``a`` and ``b`` cannot describe one person, or None."""
    for attr in ("first", "last", "father", "mother", "year", "dob", "electoral_center"):
        if _clash(getattr(a, attr), getattr(b, attr)):
            return f"{attr} differs"
    amkas = a.amkas | b.amkas
    if len(amkas) > 1:
        return "two AMKA numbers"
    dob = a.dob or b.dob
    year = a.year if a.year is not None else b.year
    if dob is not None and year is not None and dob.year != year:
        return "birth year disagrees with date of birth"
    for amka in amkas:
        if dob is not None and not _amka_matches(amka, dob):
            return "AMKA-embedded date disagrees with date of birth"
        if dob is None and year is not None and amka[4:6] != f"{year % 100:02d}":
            return "AMKA-embedded year disagrees with birth year"
    return None


def _absorb(a: _Component, b: _Component) -> None:
    a.trns |= b.trns
    a.amkas |= b.amkas
    a.cards |= b.cards
    for attr in ("first", "last", "father", "mother", "year", "dob", "electoral_center"):
        if getattr(a, attr) is None:
            setattr(a, attr, getattr(b, attr))
    if a.business is None:
        a.business = b.business
    a.sources |= b.sources
    a.refs.extend(b.refs)


@dataclass(frozen=True)
class LinkConflict:
    rule: JoinRule
    left: str
    right: str
    reason: str


class _UnionFind:
    def __init__(self, fragments: Sequence[Fragment]):
        self.parent = list(range(len(fragments)))
        self.comp = {i: _Component.of(f) for i, f in enumerate(fragments)}
        self.fragments = fragments
        self.conflicts: list[LinkConflict] = []

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int, rule: JoinRule) -> bool:
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return True
        if rj < ri:
            ri, rj = rj, ri
        reason = conflict_reason(self.comp[ri], self.comp[rj])
        if reason is not None:
            c = LinkConflict(rule, self.fragments[i].ref, self.fragments[j].ref, reason)
            self.conflicts.append(c)
            log.info("skipped merge %s + %s under %s: %s", c.left, c.right, rule.value, reason)
            return False
        _absorb(self.comp[ri], self.comp.pop(rj))
        self.parent[rj] = ri
        return True


def _unique(index: Mapping[Any, list[int]], key: Any) -> int | None:
    found = index.get(key)
    return found[0] if found is not None and len(found) == 1 else None


def _group(fragments: Sequence[Fragment], source: str, key) -> dict[Any, list[int]]:
    out: dict[Any, list[int]] = {}
    for i, f in enumerate(fragments):
        if f.source == source:
            k = key(f)
            if k is not None:
                out.setdefault(k, []).append(i)
    return out


def _apply(rule: JoinRule, frags: Sequence[Fragment], uf: _UnionFind) -> None:
    if rule is JoinRule.BY_EXACT_IDENTIFIER:
        first_seen: dict[str, int] = {}
        for i, f in enumerate(frags):
            for ident in sorted(f.trns | f.amkas | f.cards):
                if ident in first_seen:
                    uf.union(first_seen[ident], i, rule)
                else:
                    first_seen[ident] = i
    elif rule is JoinRule.BY_NAME_TRIPLE_YEAR:
        trn_by_triple = _group(frags, "trn", lambda f: f.triple)
        voters = _group(frags, "voter", lambda f: (f.triple, f.year) if f.triple else None)
        for (triple, _), idxs in voters.items():
            j = _unique(trn_by_triple, triple)
            if len(idxs) == 1 and j is not None:
                uf.union(j, idxs[0], rule)
    elif rule is JoinRule.BY_AMKA_DOB:
        def key(f: Fragment):
            return (f.triple, f.mother, f.year) if f.triple and f.mother else None

        voters = _group(frags, "voter", key)
        for k, idxs in _group(frags, "amka", key).items():
            j = _unique(voters, k)
            if len(idxs) == 1 and j is not None:
                uf.union(j, idxs[0], rule)
    elif rule is JoinRule.BY_EXTRACTED_NAME:
        # first+last alone is shared by homonyms whose records were never
        # harvested, so only a full triple is a join key
        full = _group(frags, "trn", lambda f: f.triple)
        for k, idxs in _group(frags, "doc", lambda f: f.triple).items():
            j = _unique(full, k)
            if j is not None:
                for i in idxs:
                    uf.union(j, i, rule)


# --- profiles -----------------------------------------------------------------


@dataclass(frozen=True)
class Profile:
    keys: frozenset[str]
    trns: tuple[str, ...] = ()
    amka: str | None = None
    id_cards: tuple[str, ...] = ()
    first: str | None = None
    last: str | None = None
    father: str | None = None
    mother: str | None = None
    dob: dt.date | int | None = None  # full date when known, else birth year
    electoral_center: str | None = None
    business_record: TrnRecord | None = None
    sources: frozenset[str] = frozenset()
    completeness: float = 0.0

    @property
    def full_dob(self) -> dt.date | None:
        return self.dob if isinstance(self.dob, dt.date) else None

    @property
    def birth_year(self) -> int | None:
        return self.dob.year if isinstance(self.dob, dt.date) else self.dob

    def filled(self) -> dict[str, bool]:
        return {
            "trn": bool(self.trns),
            "amka": self.amka is not None,
            "id_card": bool(self.id_cards),
            "full_dob": self.full_dob is not None,
            "mother_name": self.mother is not None,
            "electoral_center": self.electoral_center is not None,
            "business_record": self.business_record is not None,
        }


def completeness(profile: Profile, weights: Mapping[str, float] | None = None) -> float:
    """Weighted share of the seven profile slots that are filled."""
    w = {s: 1.0 for s in SLOTS}
    if weights:
        unknown = set(weights) - set(SLOTS)
        if unknown:
            raise ValueError(f"unknown profile slots {sorted(unknown)}")
        w.update(weights)
    total = sum(w.values())
    if total <= 0:
        raise ValueError("slot weights must have a positive sum")
    filled = profile.filled()
    return sum(w[s] for s in SLOTS if filled[s]) / total


def _profile(c: _Component, weights: Mapping[str, float] | None) -> Profile:
    p = Profile(
        keys=frozenset(c.trns | c.amkas | c.cards),
        trns=tuple(sorted(c.trns)),
        amka=next(iter(c.amkas)) if c.amkas else None,
        id_cards=tuple(sorted(c.cards)),
        first=c.first, last=c.last, father=c.father, mother=c.mother,
        dob=c.dob if c.dob is not None else c.year,
        electoral_center=c.electoral_center,
        business_record=c.business,
        sources=frozenset(c.sources),
    )
    return _with_score(p, weights)


def _with_score(p: Profile, weights: Mapping[str, float] | None) -> Profile:
    return replace(p, completeness=completeness(p, weights))


@dataclass(frozen=True)
class LinkResult:
    profiles: list[Profile]
    conflicts: list[LinkConflict]


def link_detailed(stores: Iterable[ResultStore], hits: Iterable[Any] = (),
                  rules: Iterable[JoinRule | str] = DEFAULT_RULES,
                  weights: Mapping[str, float] | None = None) -> LinkResult:
    """Like :func:`link` but also returns the merges that were refused."""
    rules = [JoinRule.parse(r) for r in rules]
    unique: dict[tuple, Fragment] = {}
    for store in stores:
        for f in _fragments_from_store(store):
            unique.setdefault(f.sort_key, f)
    for f in _fragments_from_hits(hits):
        unique.setdefault(f.sort_key, f)
    frags = [unique[k] for k in sorted(unique)]
    uf = _UnionFind(frags)
    for rule in (r for r in JoinRule if r in rules):  # fixed order regardless of how rules were listed
        _apply(rule, frags, uf)
    profiles = [_profile(uf.comp[root], weights) for root in sorted(uf.comp)]
    return LinkResult(profiles, uf.conflicts)


def link(stores: Iterable[ResultStore], hits: Iterable[Any] = (),
         rules: Iterable[JoinRule | str] = DEFAULT_RULES,
         weights: Mapping[str, float] | None = None) -> list[Profile]:
    """Merge harvest outputs (TRN, voter and AMKA stores plus document hits) into profiles.

    The result depends only on the set of harvested fragments, not on the
    order of ``stores`` or ``hits``.
    """
    return link_detailed(stores, hits, rules, weights).profiles


# --- evaluation ---------------------------------------------------------------


@dataclass(frozen=True)
class LinkageScore:
    precision: float
    recall: float
    mean_completeness: float
    correct: int
    judged: int
    covered: int
    harvestable: int

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.precision, self.recall, self.mean_completeness)


def _owners(world: World) -> dict[str, str]:
    own: dict[str, str] = {}
    for p in world.persons:
        for t in p.trns:
            own[t.trn] = p.id
        for c in p.id_cards:
            own[str(c)] = p.id
        own[p.amka] = p.id
    return own


def profile_owner(profile: Profile, owners: Mapping[str, str]) -> str | None:
    """The single ground-truth person behind every identifier, or None."""
    people = {owners.get(k) for k in profile.keys}
    if len(people) == 1 and None not in people:
        return next(iter(people))
    return None


def harvestable_persons(world: World, corpus: Iterable[Document] | None = None) -> set[str]:
    """Non-decoy persons with a disclosed TRN record or a mention in the corpus."""
    decoys = {p.id for p in world.persons if p.is_decoy}
    out = {p.id for p in world.persons if p.category2}
    docs = world.documents if corpus is None else corpus
    for d in docs:
        out.update(a.person_id for a in d.annotations if a.kind is not AnnotationKind.FULL_NAME)
    return out - decoys


def evaluate_linkage(profiles: Sequence[Profile], world: World,
                     corpus: Iterable[Document] | None = None) -> LinkageScore:
    """Precision over profiles holding identifiers; recall over harvestable persons.

    A profile is correct iff all of its identifiers belong to one person.
    Profiles without any identifier cannot be judged and are left out of the
    precision denominator. Mean completeness is taken over all profiles.
    """
    owners = _owners(world)
    judged = correct = 0
    covered: set[str] = set()
    for p in profiles:
        if not p.keys:
            continue
        judged += 1
        who = profile_owner(p, owners)
        if who is not None:
            correct += 1
            covered.add(who)
    wanted = harvestable_persons(world, corpus)
    covered &= wanted
    return LinkageScore(
        precision=correct / judged if judged else 1.0,
        recall=len(covered) / len(wanted) if wanted else 0.0,
        mean_completeness=sum(p.completeness for p in profiles) / len(profiles) if profiles else 0.0,
        correct=correct,
        judged=judged,
        covered=len(covered),
        harvestable=len(wanted),
    )


def coverage(profiles: Sequence[Profile], world: World, persons: Iterable[str] | None = None,
             slots: Sequence[str] = ("trn", "electoral_center", "amka")) -> float:
    """Share of ``persons`` (default: non-decoy category-2) owning a correct profile with ``slots`` filled."""
    owners = _owners(world)
    if persons is None:
        persons = [p.id for p in world.persons if p.category2 and not p.is_decoy]
    wanted = set(persons)
    if not wanted:
        return 0.0
    done = set()
    for p in profiles:
        filled = p.filled()
        if all(filled[s] for s in slots):
            who = profile_owner(p, owners)
            if who in wanted:
                done.add(who)
    return len(done) / len(wanted)


# --- export ---------------------------------------------------------------------


def profile_to_dict(p: Profile) -> dict[str, Any]:
    dob = p.dob.isoformat() if isinstance(p.dob, dt.date) else p.dob
    return {
        "keys": sorted(p.keys),
        "trns": list(p.trns),
        "amka": p.amka,
        "id_cards": list(p.id_cards),
        "first": p.first,
        "last": p.last,
        "father": p.father,
        "mother": p.mother,
        "dob": dob,
        "electoral_center": p.electoral_center,
        "business_record": trn_record_to_json(p.business_record) if p.business_record else None,
        "sources": sorted(p.sources),
        "completeness": p.completeness,
    }


def profile_from_dict(d: Mapping[str, Any]) -> Profile:
    dob = d.get("dob")
    if isinstance(dob, str):
        dob = dt.date.fromisoformat(dob)
    rec = d.get("business_record")
    return Profile(
        keys=frozenset(d["keys"]),
        trns=tuple(d.get("trns", ())),
        amka=d.get("amka"),
        id_cards=tuple(d.get("id_cards", ())),
        first=d.get("first"), last=d.get("last"), father=d.get("father"), mother=d.get("mother"),
        dob=dob,
        electoral_center=d.get("electoral_center"),
        business_record=trn_record_from_json(rec) if rec else None,
        sources=frozenset(d.get("sources", ())),
        completeness=float(d.get("completeness", 0.0)),
    )


def profile_lines(profiles: Iterable[Profile]) -> Iterable[str]:
    yield json.dumps({"format": PROFILE_FORMAT, "version": PROFILE_VERSION})
    for p in profiles:
        yield json.dumps(profile_to_dict(p), ensure_ascii=False, separators=(",", ":"))


def save_profiles(profiles: Iterable[Profile], path: str | Path) -> None:
    Path(path).write_text("\n".join(profile_lines(profiles)) + "\n", encoding="utf-8")


def load_profiles(path: str | Path) -> list[Profile]:
    with open(path, encoding="utf-8") as fh:
        head = json.loads(fh.readline() or "{}")
        if head.get("format") != PROFILE_FORMAT or head.get("version") != PROFILE_VERSION:
            raise ValueError(f"unsupported profile file header {head!r}")
        return [profile_from_dict(json.loads(line)) for line in fh if line.strip()]
