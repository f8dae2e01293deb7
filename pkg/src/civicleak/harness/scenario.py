"""End-to-end orchestration on one simulated clock.

Phases run in a fixed order: generate, TRN sweep, voter brute force, AMKA
date search, document mining, linkage, defense evaluation. Each harvest phase
starts where the previous one stopped on the simulated clock, so defense
windows carry over. Nothing here reads the wall clock.
"""

from __future__ import annotations

import contextlib
import signal
import threading
from collections.abc import Iterator
from dataclasses import dataclass, field, replace
from typing import Any

from ..defense import DefensePolicy, detect_exfiltration, plant_decoys, sanitize_document
from ..docminer import NoiseModel, TemplateSet, evaluate_extraction, extract_corpus, generate_corpus
from ..harvester import (
    AmkaTarget,
    HarvestPlan,
    HarvestTarget,
    ResultStore,
    VoterTarget,
    amka_targets,
    harvest_amka,
    harvest_documents,
    harvest_stats,
    harvest_trn,
    harvest_voter,
    seeds_from_trn,
)
from ..linkage import Profile, coverage, evaluate_linkage, link_detailed
from ..model import AnnotationKind, Document, World
from ..population import generate_world
from ..registry import Registry
from ..wire import RemoteRegistry, ServiceServer
from .config import ScenarioConfig
from .report import MetricsReport, emit_report, sample_curve


class PhaseError(RuntimeError):
    """A phase failed; ``phase`` names it (CLI exit code 3)."""

    def __init__(self, phase: str, cause: BaseException):
        super().__init__(f"[{phase}] {type(cause).__name__}: {cause}")
        self.phase = phase
        self.cause = cause


@contextlib.contextmanager
def _phase(name: str) -> Iterator[None]:
    try:
        yield
    except PhaseError:
        raise
    except Exception as exc:
        raise PhaseError(name, exc) from exc


@dataclass
class ScenarioRun:
    """Everything a scenario produced, for callers that need more than the report."""

    config: ScenarioConfig
    world: World
    corpus: list[Document] = field(default_factory=list)
    baits: list[str] = field(default_factory=list)
    stores: dict[str, ResultStore] = field(default_factory=dict)
    seeds: list[VoterTarget] = field(default_factory=list)
    targets: list[AmkaTarget] = field(default_factory=list)
    hits: list[Any] = field(default_factory=list)
    profiles: list[Profile] = field(default_factory=list)
    report: MetricsReport = field(default_factory=MetricsReport)


def build_world(cfg: ScenarioConfig) -> tuple[World, list[Document], list[str]]:
    """Population, planted decoys and the published corpus."""
    world = generate_world(cfg.population)
    baits: list[str] = []
    if cfg.defenses.decoy_count:
        world, baits = plant_decoys(world, cfg.defenses.decoy_count, cfg.seed)
    corpus: list[Document] = []
    if cfg.corpus.documents:
        templates = TemplateSet.load(cfg.corpus.templates) if cfg.corpus.templates else None
        noise = NoiseModel(cfg.corpus.noise, cfg.corpus.seed or 0) if cfg.corpus.noise else None
        corpus = generate_corpus(world, cfg.corpus.documents, seed=cfg.corpus.seed or 0, templates=templates,
                                 noise=noise, current_card_probability=cfg.corpus.current_card_probability)
        if cfg.corpus.sanitize:
            corpus = [sanitize_document(cfg.defenses, d) for d in corpus]
        world = replace(world, documents=tuple(corpus))
    return world, corpus, baits


@contextlib.contextmanager
def _handle(registry: Registry, transport: str):
    if transport == "wire":
        with ServiceServer(registry) as server:
            remote = RemoteRegistry(server.url)
            try:
                yield remote
            finally:
                remote.close()
    else:
        yield registry


def _summarise(report: MetricsReport, phase: str, store: ResultStore, world: World, targets: int | None,
               total: int, samples: int) -> None:
    s = harvest_stats(store, world, targets)
    report.put(phase, "queries", s.queries)
    report.put(phase, "hits", s.hits)
    report.put(phase, "recall", s.recall)
    report.put(phase, "queries_per_record", s.queries_per_record)
    report.put(phase, "elapsed_ms", s.elapsed)
    report.put(phase, "captcha_failures", s.captcha_failures)
    report.put(phase, "stalled_workers", store.stalled_workers)
    for k, v in s.outcomes.items():
        report.put(phase, f"outcome:{k}", v)
    for k, v in s.defense_encounters.items():
        report.put(phase, f"defense:{k}", v)
    report.put_curve(phase, "leaked_fraction", sample_curve(store.hit_seqs, store.queries, total, samples))


def run_pipeline(cfg: ScenarioConfig) -> ScenarioRun:
    """Run every configured phase and collect artifacts plus the metrics report."""
    with _phase("generate"):
        world, corpus, baits = build_world(cfg)
    run = ScenarioRun(cfg, world, corpus, baits)
    rep = run.report
    samples = cfg.report.curve_samples
    rep.put("world", "persons", sum(1 for p in world.persons if not p.is_decoy))
    rep.put("world", "category2", sum(1 for p in world.persons if p.category2 and not p.is_decoy))
    rep.put("world", "decoys", len(baits))
    rep.put("world", "documents", len(corpus))

    registry = Registry(world, cfg.defenses)
    clock = 0

    def engine_for(plan: HarvestPlan):
        return replace(plan.engine, start_time=clock)

    def advance(store: ResultStore) -> int:
        return store.last_time + 1 if store.queries else clock

    with _phase("serve"), contextlib.ExitStack() as stack:
        handle = stack.enter_context(_handle(registry, cfg.transport))

        plan = cfg.plan(HarvestTarget.TRN_SWEEP)
        if plan is not None:
            with _phase(plan.target.value):
                store = harvest_trn(replace(plan, engine=engine_for(plan)), handle)
                run.stores["trn"] = store
                clock = advance(store)
                wanted = sum(1 for p in world.persons for t in p.trns if p.category2)
                _summarise(rep, plan.target.value, store, world, None, wanted, samples)
                rep.put(plan.target.value, "category1_flagged", len(store.category1))
                run.seeds = seeds_from_trn(store)

        plan = cfg.plan(HarvestTarget.VOTER_BRUTE_FORCE)
        if plan is not None:
            with _phase(plan.target.value):
                names = plan.female_names if plan.female_names is not None else cfg.population.names.female
                store = harvest_voter(run.seeds, names, handle, year_range=plan.year_range,
                                      engine=engine_for(plan))
                run.stores["voter"] = store
                clock = advance(store)
                _summarise(rep, plan.target.value, store, world, len(run.seeds), len(run.seeds), samples)
                rep.put(plan.target.value, "targets", len(run.seeds))
                run.targets = amka_targets(run.seeds, store)

        plan = cfg.plan(HarvestTarget.AMKA_DOB)
        if plan is not None:
            with _phase(plan.target.value):
                store = harvest_amka(run.targets, plan.strategy, handle, dob_weights=plan.dob_weights,
                                     engine=engine_for(plan), seed=plan.seed)
                run.stores["amka"] = store
                clock = advance(store)
                _summarise(rep, plan.target.value, store, world, len(run.targets), len(run.targets), samples)
                rep.put(plan.target.value, "targets", len(run.targets))

        plan = cfg.plan(HarvestTarget.DOC_MINING)
        if plan is not None:
            with _phase(plan.target.value):
                store, docs = harvest_documents(plan.search_terms, handle, engine=engine_for(plan))
                run.stores["docs"] = store
                clock = advance(store)
                run.hits = extract_corpus(docs, cfg.corpus.extractor)
                ph = plan.target.value
                rep.put(ph, "queries", store.queries)
                rep.put(ph, "documents_fetched", len(docs))
                for k, v in sorted(store.defense_counts.items()):
                    rep.put(ph, f"defense:{k}", v)
                rep.put(ph, "hits", len(run.hits))
                if corpus:
                    ev = evaluate_extraction(corpus, run.hits, world)
                    for kind in (AnnotationKind.ID_CARD, AnnotationKind.TRN, AnnotationKind.AMKA):
                        rep.put(ph, f"{kind.value}:precision", ev[kind].precision)
                        rep.put(ph, f"{kind.value}:recall", ev[kind].recall)
                    rep.put(ph, "name_binding_accuracy", ev.name_binding_accuracy)

    with _phase("linkage"):
        stores = [run.stores[k] for k in ("trn", "voter", "amka") if k in run.stores]
        result = link_detailed(stores, run.hits, cfg.linkage.rules, cfg.linkage.weights)
        run.profiles = result.profiles
        score = evaluate_linkage(result.profiles, world, corpus)
        rep.put("linkage", "profiles", len(result.profiles))
        rep.put("linkage", "conflicts", len(result.conflicts))
        rep.put("linkage", "precision", score.precision)
        rep.put("linkage", "recall", score.recall)
        rep.put("linkage", "mean_completeness", score.mean_completeness)
        rep.put("linkage", "coverage_trn_voter_amka", coverage(result.profiles, world))

    with _phase("defense"):
        rep.put("defense", "detection_events", len(registry.detection_events))
        rep.put("defense", "decoy_detections", len(detect_exfiltration(run.baits, run.profiles, clock)))

    rep.put("scenario", "seed", cfg.seed)
    rep.put("scenario", "simulated_duration_ms", clock)
    return run


def run_scenario(cfg: ScenarioConfig) -> MetricsReport:
    """Run the scenario and write the configured report targets."""
    run = run_pipeline(cfg)
    with _phase("report"):
        for t in cfg.report.targets:
            emit_report(run.report, t.path, t.format)
    return run.report


def serve(world: World, defenses: DefensePolicy | None = None, host: str = "127.0.0.1", port: int = 0,
          *, stop: threading.Event | None = None, ready=None) -> None:
    """Serve ``world`` over HTTP until SIGINT/SIGTERM (or ``stop`` is set).

    Raises ``OSError`` when the address cannot be bound.
    """
    registry = Registry(world, defenses)
    stop = stop or threading.Event()
    server = ServiceServer(registry, host, port).start()
    previous = {}
    if threading.current_thread() is threading.main_thread():
        for sig in (signal.SIGINT, signal.SIGTERM):
            previous[sig] = signal.signal(sig, lambda *_: stop.set())
    try:
        if ready is not None:
            ready(server.url)
        while not stop.wait(0.2):
            pass
    finally:
        server.close()
        for sig, handler in previous.items():
            signal.signal(sig, handler)
