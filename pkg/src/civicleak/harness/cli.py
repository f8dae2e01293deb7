"""``civicleak`` command line: gen, serve, harvest, mine, link, run, report.

Values come from, in decreasing precedence: command-line flags, the
``--config`` file, built-in defaults. Exit codes: 0 success, 2 configuration
error, 3 runtime failure in a phase.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from dataclasses import replace
from typing import Any

from ..defense import detect_exfiltration
from ..docminer import evaluate_extraction, extract_corpus, load_corpus, load_hits, save_corpus, save_hits
from ..harvester import (
    HarvestPlan,
    HarvestTarget,
    ResultStore,
    amka_targets,
    harvest_amka,
    harvest_documents,
    harvest_stats,
    harvest_trn,
    harvest_voter,
    seeds_from_trn,
)
from ..linkage import coverage, evaluate_linkage, link_detailed, save_profiles
from ..population import load_world, save_world
from ..registry import Registry
from ..wire import RemoteRegistry
from .config import ConfigError, ScenarioConfig, config_from_dict, load_config_dict, set_key
from .report import emit_report, format_table, load_report
from .scenario import PhaseError, build_world, run_pipeline, serve

EXIT_OK, EXIT_CONFIG, EXIT_PHASE = 0, 2, 3

# flag dest -> config key
_OVERRIDES = {
    "seed": "seed",
    "persons": "population.person_count",
    "trn_exponent": "population.trn_exponent",
    "category2_fraction": "population.category2_fraction",
    "daily_quota": "defenses.daily_quota",
    "captcha_after": "defenses.captcha_after",
    "decoys": "defenses.decoy_count",
    "documents": "corpus.documents",
    "noise": "corpus.noise",
    "sanitize": "corpus.sanitize",
    "workers": "plans.*.engine.workers",
    "query_budget": "plans.*.engine.query_budget",
    "query_cost": "plans.*.engine.query_cost",
    "transport": "transport",
}


def _scenario(args: argparse.Namespace) -> ScenarioConfig:
    data: dict[str, Any] = load_config_dict(args.config) if getattr(args, "config", None) else {}
    for dest, key in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            data = set_key(data, key, value)
    strategy = getattr(args, "strategy", None)
    if strategy is not None:
        plans = data.get("plans") or [{"target": t.value} for t in HarvestTarget]
        for p in plans:
            if p.get("target") == HarvestTarget.AMKA_DOB.value:
                p["strategy"] = strategy
        data["plans"] = plans
    return config_from_dict(data)


def _add_config_flags(p: argparse.ArgumentParser, *, population=False, defenses=False, engine=False,
                      corpus=False) -> None:
    p.add_argument("--config", help="scenario file (YAML or JSON)")
    p.add_argument("--seed", type=int)
    if population:
        p.add_argument("--persons", type=int, help="population size")
        p.add_argument("--trn-exponent", type=int, help="TRN prefix space is 10^N")
        p.add_argument("--category2-fraction", type=float)
    if defenses:
        p.add_argument("--daily-quota", type=int, help="requests per source address per simulated day")
        p.add_argument("--captcha-after", type=int, help="consecutive requests before a CAPTCHA")
        p.add_argument("--decoys", type=int, help="decoy persons to plant")
    if engine:
        p.add_argument("--workers", type=int)
        p.add_argument("--query-budget", type=int)
        p.add_argument("--query-cost", type=int, help="simulated ms per request")
    if corpus:
        p.add_argument("--documents", type=int, help="documents in the generated corpus")
        p.add_argument("--noise", type=float, help="OCR substitution probability")
        p.add_argument("--sanitize", action="store_true", default=None, help="sanitize documents before publishing")


def _emit(obj: Any) -> None:
    print(json.dumps(obj, ensure_ascii=False, indent=2, default=str))


# --- verbs ----------------------------------------------------------------------


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = _scenario(args)
    with _tag("generate"):
        world, corpus, baits = build_world(cfg)
        save_world(world, args.out)
        if args.corpus_out:
            save_corpus(corpus, args.corpus_out)
    _emit({"world": args.out, "persons": len(world.persons), "documents": len(corpus), "decoy_trns": baits})
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    cfg = _scenario(args)
    with _tag("serve"):
        world = load_world(args.world) if args.world else build_world(cfg)[0]
        serve(world, cfg.defenses, args.host, args.port,
              ready=lambda url: print(f"serving on {url}", flush=True))
    return EXIT_OK


def _handle(args: argparse.Namespace, cfg: ScenarioConfig):
    if args.url:
        return RemoteRegistry(args.url), None
    if not args.world:
        raise ConfigError("either --world or --url is required")
    world = load_world(args.world)
    return Registry(world, cfg.defenses), world


def _plan(cfg: ScenarioConfig, target: HarvestTarget, world) -> HarvestPlan:
    plan = cfg.plan(target) or HarvestPlan(target=target)
    if world is not None:  # a loaded world defines the TRN space and the birth years
        plan = replace(plan, exponent=world.config.trn_exponent, year_range=world.config.year_range)
    return plan


def cmd_harvest(args: argparse.Namespace) -> int:
    cfg = _scenario(args)
    target = HarvestTarget(args.phase)
    with _tag(target.value):
        handle, world = _handle(args, cfg)
        plan = _plan(cfg, target, world)
        engine = replace(plan.engine, start_time=args.start_time)
        if target is HarvestTarget.TRN_SWEEP:
            store = harvest_trn(replace(plan, engine=engine), handle)
            targets = None
        else:
            if not args.seeds:
                raise ConfigError(f"{target.value} needs --seeds (a TRN sweep log)")
            seeds = seeds_from_trn(ResultStore.load(args.seeds))
            if target is HarvestTarget.VOTER_BRUTE_FORCE:
                names = plan.female_names
                if names is None:
                    names = (world.config if world is not None else cfg.population).names.female
                store = harvest_voter(seeds, names, handle, year_range=plan.year_range, engine=engine)
                targets = len(seeds)
            elif target is HarvestTarget.AMKA_DOB:
                if not args.voter_log:
                    raise ConfigError("amka-dob needs --voter-log")
                amka = amka_targets(seeds, ResultStore.load(args.voter_log))
                store = harvest_amka(amka, plan.strategy, handle, dob_weights=plan.dob_weights, engine=engine,
                                     seed=plan.seed)
                targets = len(amka)
            else:
                raise ConfigError("use the mine verb for documents")
        store.save(args.out)
    summary = harvest_stats(store, world, targets).as_dict()
    summary["log"] = args.out
    _emit(summary)
    return EXIT_OK


def cmd_mine(args: argparse.Namespace) -> int:
    cfg = _scenario(args)
    with _tag("doc-mining"):
        if args.corpus:
            docs = load_corpus(args.corpus)
        else:
            handle, _ = _handle(args, cfg)
            plan = _plan(cfg, HarvestTarget.DOC_MINING, None)
            _, docs = harvest_documents(plan.search_terms, handle, engine=plan.engine)
        hits = extract_corpus(docs, cfg.corpus.extractor)
        save_hits(hits, args.out)
    out: dict[str, Any] = {"documents": len(docs), "hits": len(hits), "out": args.out}
    if args.corpus and any(d.annotations for d in docs):
        ev = evaluate_extraction(docs, hits)
        out["scores"] = {k.value: {"precision": s.precision, "recall": s.recall} for k, s in ev.by_kind.items()}
        out["name_binding_accuracy"] = ev.name_binding_accuracy
    _emit(out)
    return EXIT_OK


def cmd_link(args: argparse.Namespace) -> int:
    cfg = _scenario(args)
    with _tag("linkage"):
        stores = [ResultStore.load(p) for p in args.logs]
        hits = load_hits(args.hits) if args.hits else []
        result = link_detailed(stores, hits, cfg.linkage.rules, cfg.linkage.weights)
        save_profiles(result.profiles, args.out)
    out: dict[str, Any] = {"profiles": len(result.profiles), "conflicts": len(result.conflicts), "out": args.out}
    if args.world:
        world = load_world(args.world)
        s = evaluate_linkage(result.profiles, world)
        out.update(precision=s.precision, recall=s.recall, mean_completeness=s.mean_completeness,
                   coverage_trn_voter_amka=coverage(result.profiles, world))
        baits = [p.trns[0].trn for p in world.persons if p.is_decoy]
        out["decoy_detections"] = len(detect_exfiltration(baits, result.profiles))
    _emit(out)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _scenario(args)
    targets = [(t.format, t.path) for t in cfg.report.targets]
    if args.report_csv:
        targets.append(("csv", args.report_csv))
    if args.report_jsonl:
        targets.append(("records", args.report_jsonl))
    run = run_pipeline(cfg)
    with _tag("report"):
        for fmt, path in targets:
            emit_report(run.report, path, fmt)
    print(format_table(run.report))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    with _tag("report"):
        report = load_report(args.input)
        if args.csv:
            emit_report(report, args.csv, "csv")
        if args.jsonl:
            emit_report(report, args.jsonl, "records")
    print(format_table(report))
    return EXIT_OK


class _tag:
    """Context manager turning unexpected failures into phase-tagged errors."""

    def __init__(self, phase: str):
        self.phase = phase

    def __enter__(self) -> None:
        return None

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc is None or isinstance(exc, (PhaseError, ConfigError)) or not isinstance(exc, Exception):
            return False
        raise PhaseError(self.phase, exc) from exc


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="civicleak", description="Identity-harvesting simulator.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen", help="generate a world file (and optionally a corpus file)")
    _add_config_flags(p, population=True, defenses=True, corpus=True)
    p.add_argument("--out", required=True, help="world file to write")
    p.add_argument("--corpus-out", help="corpus file to write")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("serve", help="serve a world over HTTP until interrupted")
    _add_config_flags(p, population=True, defenses=True, corpus=True)
    p.add_argument("--world", help="world file; generated from the config when omitted")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("harvest", help="run one harvest phase and write its outcome log")
    _add_config_flags(p, defenses=True, engine=True)
    p.add_argument("phase", choices=[t.value for t in HarvestTarget if t is not HarvestTarget.DOC_MINING])
    p.add_argument("--world", help="world file served in-process")
    p.add_argument("--url", help="base URL of a running service")
    p.add_argument("--seeds", help="TRN sweep log providing name triples")
    p.add_argument("--voter-log", help="voter log providing mother names and birth years")
    p.add_argument("--strategy", help="DOB schedule for amka-dob")
    p.add_argument("--start-time", type=int, default=0, help="simulated ms at which the phase starts")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_harvest)

    p = sub.add_parser("mine", help="extract identifiers from a corpus file or a served repository")
    _add_config_flags(p)
    p.add_argument("--corpus", help="corpus file")
    p.add_argument("--world", help="world file served in-process")
    p.add_argument("--url", help="base URL of a running service")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("link", help="join outcome logs and hits into profiles")
    _add_config_flags(p)
    p.add_argument("--logs", nargs="*", default=[], help="outcome logs")
    p.add_argument("--hits", help="extraction hit file")
    p.add_argument("--world", help="world file for evaluation")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("run", help="run a full scenario")
    _add_config_flags(p, population=True, defenses=True, engine=True, corpus=True)
    p.add_argument("--transport", choices=["in-process", "wire"])
    p.add_argument("--strategy", help="DOB schedule for the amka-dob phase")
    p.add_argument("--report-csv")
    p.add_argument("--report-jsonl")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="print or convert a structured report")
    p.add_argument("input", help="structured report (JSON lines)")
    p.add_argument("--csv")
    p.add_argument("--jsonl")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhaseError as exc:
        print(f"phase error: {exc}", file=sys.stderr)
        return EXIT_PHASE
