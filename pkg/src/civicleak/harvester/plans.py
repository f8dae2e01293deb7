"""The three harvest campaigns and their summary statistics."""

from __future__ import annotations

import datetime as dt
import enum
from collections.abc import Callable, Iterable, Iterator, Sequence
from dataclasses import dataclass, field, replace
from typing import Any

from ..ident import PRIORITY_PREFIXES, EnumerationSpace, TrnCategory
from ..model import World
from ..text import fold
from .engine import Engine, EngineConfig, ServiceHandle
from .schedule import DobRecord, DobStrategy, schedule_dob
from .store import OutcomeKind, Query, ResultStore

YEAR_RANGE = (1912, 1995)


class HarvestTarget(enum.Enum):
    TRN_SWEEP = "trn-sweep"
    VOTER_BRUTE_FORCE = "voter-brute-force"
    AMKA_DOB = "amka-dob"
    DOC_MINING = "doc-mining"


@dataclass(frozen=True)
class HarvestPlan:
    """One campaign. Fields not used by ``target`` are ignored."""

    target: HarvestTarget = HarvestTarget.TRN_SWEEP
    partitions: tuple[str, ...] | None = None  # None: priority prefixes, then the other first digits
    ordering: str = "permutation"  # sequential | permutation | global
    exponent: int = 8
    engine: EngineConfig = field(default_factory=EngineConfig)
    seed: int = 0
    year_range: tuple[int, int] = YEAR_RANGE
    female_names: tuple[str, ...] | None = None  # None: bundled corpus
    strategy: str = "calendar-reversed"
    dob_weights: tuple[float, ...] | None = None
    search_terms: tuple[str, ...] = ("ΑΔΤ", "ΑΦΜ", "ΑΜΚΑ")

    def space(self) -> EnumerationSpace:
        if self.partitions is None:
            return EnumerationSpace.prioritized(self.exponent, PRIORITY_PREFIXES, ordering=self.ordering,
                                                seed=self.seed)
        return EnumerationSpace(self.exponent, tuple(self.partitions), self.ordering, self.seed)


def _store(keep_log: bool, sink) -> ResultStore:
    return ResultStore(keep_log=keep_log, sink=sink)


# --- TRN sweep ----------------------------------------------------------------


def harvest_trn(plan: HarvestPlan, handle: ServiceHandle, *, keep_log: bool = True, sink=None) -> ResultStore:
    """Look up every valid TRN of the plan's space in partition-priority order."""
    if plan.target is not HarvestTarget.TRN_SWEEP:
        raise ValueError("harvest_trn needs a TRN_SWEEP plan")
    queries = (Query("trn_lookup", (trn,)) for trn in plan.space())
    return Engine(handle, plan.engine, _store(keep_log, sink)).run(queries)


# --- voter brute force ----------------------------------------------------------


@dataclass(frozen=True)
class VoterTarget:
    key: str  # the seed TRN
    first: str
    last: str
    father: str


def seeds_from_trn(store: ResultStore) -> list[VoterTarget]:
    """Name triples recovered by a TRN sweep, one target per disclosed TRN."""
    return [
        VoterTarget(r.trn, r.first_name, r.last_name, r.father_name)
        for r in sorted(store.trn_records.values(), key=lambda r: r.trn)
    ]


def seeds_from_world(world: World, persons: Iterable | None = None) -> list[VoterTarget]:
    """Injected seeds: the names every TRN record would disclose."""
    chosen = world.persons if persons is None else persons
    return [VoterTarget(p.trns[0].trn, p.names.first, p.names.last, p.names.father)
            for p in chosen if not p.is_decoy]


def mother_prefixes(female_corpus: Iterable[str]) -> list[str]:
    """Distinct two-letter prefixes in corpus (popularity) order."""
    seen: dict[str, None] = {}
    for name in female_corpus:
        f = fold(name)
        if len(f) >= 2:
            seen.setdefault(f[:2], None)
    if not seen:
        raise ValueError("female name corpus is empty")
    return list(seen)


def voter_queries(seeds: Sequence[VoterTarget], prefixes: Sequence[str],
                  year_range: tuple[int, int] = YEAR_RANGE,
                  resolved: Callable[[str], bool] = lambda key: False) -> Iterator[Query]:
    """Prefix-major, year-minor probes per target, abandoning a target once resolved."""
    years = range(year_range[0], year_range[1] + 1)
    for s in seeds:
        for mp in prefixes:
            if resolved(s.key):
                break
            for y in years:
                if resolved(s.key):
                    break
                yield Query("voter_search", (s.first, s.last, s.father, mp, y), s.key)


def harvest_voter(seeds: Sequence[VoterTarget], female_corpus: Iterable[str], handle: ServiceHandle, *,
                  year_range: tuple[int, int] = YEAR_RANGE, engine: EngineConfig | None = None,
                  keep_log: bool = True, sink=None) -> ResultStore:
    """Brute-force mother prefix x birth year per target; stop at the first hit."""
    prefixes = mother_prefixes(female_corpus)
    store = _store(keep_log, sink)
    queries = voter_queries(seeds, prefixes, year_range, store.resolved.__contains__)
    return Engine(handle, engine, store).run(queries)


# --- AMKA by date of birth --------------------------------------------------------


@dataclass(frozen=True)
class AmkaTarget:
    key: str
    first: str
    last: str
    father: str
    mother: str
    year: int


def amka_targets(seeds: Sequence[VoterTarget], voter_store: ResultStore) -> list[AmkaTarget]:
    out = []
    for s in seeds:
        hit = voter_store.voter.get(s.key)
        if hit is not None:
            v, _ = hit
            out.append(AmkaTarget(s.key, s.first, s.last, s.father, v.mother_name, v.birth_year))
    return out


def harvest_amka(targets: Sequence[AmkaTarget], strategy: DobStrategy | str, handle: ServiceHandle, *,
                 dob_weights: Sequence[float] | None = None, engine: EngineConfig | None = None,
                 keep_log: bool = True, sink=None, seed: int = 0) -> ResultStore:
    """Run a DOB schedule with full-date lookups; a hit resolves the target."""
    store = _store(keep_log, sink)
    by_key = {t.key: t for t in targets}
    records = [DobRecord(t.key, t.year) for t in targets]
    schedule = schedule_dob(records, strategy, dob_weights, resolved=store.resolved.__contains__, seed=seed)

    def queries() -> Iterator[Query]:
        for rec, day in schedule:
            t = by_key[rec.key]
            yield Query("amka_search", (t.first, t.last, t.father, t.mother, day), t.key)

    return Engine(handle, engine, store).run(queries())


# --- document repository ---------------------------------------------------------


def harvest_documents(terms: Sequence[str], handle: ServiceHandle, *, engine: EngineConfig | None = None,
                      keep_log: bool = True, sink=None) -> tuple[ResultStore, list]:
    """Search the repository for each term, then fetch every matching document once.

    Returns the store (searches and fetches) and the fetched documents in
    first-match order.
    """
    if not keep_log:
        raise ValueError("document harvesting needs the in-memory log")
    store = _store(keep_log, sink)
    cfg = engine or EngineConfig()
    Engine(handle, cfg, store).run(Query("doc_search", (t,)) for t in terms)
    ids: dict[str, None] = {}
    docs: dict[str, object] = {}
    for o in store.log:
        if o.kind is OutcomeKind.HIT and isinstance(o.result, list):
            ids.update(dict.fromkeys(o.result))
    resume = replace(cfg, start_time=store.last_time + cfg.query_cost if store.queries else cfg.start_time)
    mark = len(store.log)
    Engine(handle, resume, store).run(Query("doc_fetch", (i,), f"doc:{i}") for i in ids)
    for o in store.log[mark:]:
        if o.kind is OutcomeKind.HIT:
            docs.setdefault(o.result.id, o.result)
    return store, [docs[i] for i in ids if i in docs]


# --- statistics ---------------------------------------------------------------


@dataclass(frozen=True)
class HarvestSummary:
    queries: int = 0
    hits: int = 0
    outcomes: dict[str, int] = field(default_factory=dict)
    defense_encounters: dict[str, int] = field(default_factory=dict)
    queries_per_record: float = 0.0
    elapsed: int = 0  # simulated ms from first to last request
    recall: float | None = None
    captcha_failures: int = 0

    def as_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def _truth_recall(store: ResultStore, world: World) -> float:
    idx = world.index
    if store.trn_records or store.category1 or store.counts[OutcomeKind.UNREGISTERED]:
        wanted = {t.trn for p in world.persons for t in p.trns if t.category is TrnCategory.CATEGORY2}
        return len(wanted & set(store.trn_records)) / len(wanted) if wanted else 0.0
    if store.voter:
        targets = {o.query.target for o in store.log} | set(store.voter)
        ok = sum(
            1 for k, (v, _) in store.voter.items()
            if k in idx.trn and idx.trn[k][0].electoral_center == v.electoral_center
        )
        return ok / len(targets) if targets else 0.0
    if store.amka:
        targets = {o.query.target for o in store.log} | set(store.amka)
        ok = sum(1 for k, (a, _) in store.amka.items() if k in idx.trn and idx.trn[k][0].amka == a)
        return ok / len(targets) if targets else 0.0
    return 0.0


def harvest_stats(store: ResultStore, world: World | None = None, targets: int | None = None) -> HarvestSummary:
    """Deterministic aggregate; recall only in evaluation mode (``world`` given).

    ``targets`` overrides the recall denominator for voter/AMKA stores whose
    log was not kept.
    """
    if store.queries == 0:
        return HarvestSummary(recall=0.0 if world is not None else None)
    recall = None
    if world is not None:
        if targets is not None and (store.voter or store.amka):
            hits = store.voter or store.amka
            recall = len(hits) / targets if targets else 0.0
        else:
            recall = _truth_recall(store, world)
        recall = min(1.0, max(0.0, recall))
    first = store.first_time or 0
    return HarvestSummary(
        queries=store.queries,
        hits=store.hits,
        outcomes={k.value: v for k, v in sorted(store.counts.items(), key=lambda kv: kv[0].value)},
        defense_encounters=dict(sorted(store.defense_counts.items())),
        queries_per_record=store.queries / store.hits if store.hits else float(store.queries),
        elapsed=store.last_time - first,
        recall=recall,
        captcha_failures=store.captcha_failures,
    )


def leak_curve(store: ResultStore, total: int) -> list[tuple[int, float]]:
    """(queries issued, fraction of ``total`` leaked) after every hit."""
    return [(seq + 1, (i + 1) / total) for i, seq in enumerate(store.hit_seqs)]


def time_to_fraction(store: ResultStore, total: int, fraction: float) -> int | None:
    """Simulated issue time of the hit that first reaches ``fraction`` of ``total``."""
    need = -(-fraction * total // 1)  # ceil without float drift for exact products
    need = int(need)
    if need <= 0:
        return 0
    return store.hit_times[need - 1] if len(store.hit_times) >= need else None


def queries_to_fraction(store: ResultStore, total: int, fraction: float) -> int | None:
    need = int(-(-fraction * total // 1))
    if need <= 0:
        return 0
    return store.hit_seqs[need - 1] + 1 if len(store.hit_seqs) >= need else None


def dob_of(amka_query: Query) -> dt.date:
    return amka_query.args[4]
