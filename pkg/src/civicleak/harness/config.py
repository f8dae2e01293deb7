"""Scenario configuration: one YAML (or JSON) file with a schema version.

Key names are listed in ``docs/schema.md``. Unknown keys are errors so that
typos never silently fall back to defaults.
"""

from __future__ import annotations

import copy
from collections.abc import Mapping
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from ..defense import DefensePolicy
from ..docminer import ExtractorConfig
from ..harvester import EngineConfig, HarvestPlan, HarvestTarget
from ..linkage import DEFAULT_RULES, JoinRule
from ..population import PopulationConfig, PopulationError

SCHEMA_VERSION = 1
PHASE_ORDER = (HarvestTarget.TRN_SWEEP, HarvestTarget.VOTER_BRUTE_FORCE, HarvestTarget.AMKA_DOB,
               HarvestTarget.DOC_MINING)
DESK_EXPONENT = 5  # default TRN space for scenarios: 10^5 prefixes


class ConfigError(ValueError):
    """Invalid scenario configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class CorpusConfig:
    documents: int = 1000
    seed: int | None = None
    noise: float = 0.0
    sanitize: bool = False
    templates: str | None = None  # path to a template file; None: bundled set
    current_card_probability: float = 0.8
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)


@dataclass(frozen=True)
class LinkageConfig:
    rules: tuple[JoinRule, ...] = DEFAULT_RULES
    weights: Mapping[str, float] | None = None


@dataclass(frozen=True)
class ReportTarget:
    path: str
    format: str = "csv"  # csv | records


@dataclass(frozen=True)
class ReportConfig:
    targets: tuple[ReportTarget, ...] = ()
    curve_samples: int = 50


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    population: PopulationConfig = field(default_factory=lambda: PopulationConfig(trn_exponent=DESK_EXPONENT))
    defenses: DefensePolicy = field(default_factory=DefensePolicy)
    plans: tuple[HarvestPlan, ...] = ()
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    linkage: LinkageConfig = field(default_factory=LinkageConfig)
    report: ReportConfig = field(default_factory=ReportConfig)
    transport: str = "in-process"  # in-process | wire
    schema_version: int = SCHEMA_VERSION

    def plan(self, target: HarvestTarget) -> HarvestPlan | None:
        return next((p for p in self.plans if p.target is target), None)

    @classmethod
    def default(cls, **overrides: Any) -> ScenarioConfig:
        return config_from_dict(overrides)


# --- parsing ----------------------------------------------------------------------


def _check_keys(section: str, data: Mapping[str, Any], allowed: set[str]) -> None:
    if not isinstance(data, Mapping):
        raise ConfigError(f"{section}: expected a mapping, got {type(data).__name__}")
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}")


def _names(cls) -> set[str]:
    return {f.name for f in fields(cls)}


def engine_from_dict(data: Mapping[str, Any] | None) -> EngineConfig:
    data = dict(data or {})
    _check_keys("engine", data, _names(EngineConfig))
    workers = int(data.get("workers", 1))
    if "ip_pool" not in data:
        data["ip_pool"] = tuple(f"10.0.{i // 250}.{i % 250 + 1}" for i in range(max(1, workers)))
    else:
        data["ip_pool"] = tuple(data["ip_pool"])
    return EngineConfig(**data)


def engine_to_dict(e: EngineConfig) -> dict[str, Any]:
    d = {f.name: getattr(e, f.name) for f in fields(EngineConfig)}
    d["ip_pool"] = list(e.ip_pool)
    return d


_PLAN_KEYS = {"target", "partitions", "ordering", "exponent", "engine", "seed", "year_range",
              "female_names", "strategy", "dob_weights", "search_terms"}


def _plan(data: Mapping[str, Any], seed: int, pop: PopulationConfig) -> HarvestPlan:
    _check_keys("plans[]", data, _PLAN_KEYS)
    try:
        target = HarvestTarget(data.get("target", HarvestTarget.TRN_SWEEP.value))
    except ValueError:
        raise ConfigError(f"unknown plan target {data.get('target')!r}; "
                          f"expected one of {[t.value for t in HarvestTarget]}") from None
    kw: dict[str, Any] = {"target": target, "engine": engine_from_dict(data.get("engine"))}
    kw["seed"] = seed if data.get("seed") is None else int(data["seed"])
    kw["exponent"] = pop.trn_exponent if data.get("exponent") is None else int(data["exponent"])
    kw["year_range"] = tuple(data.get("year_range") or pop.year_range)
    if data.get("partitions") is not None:
        kw["partitions"] = tuple(str(p) for p in data["partitions"])
    for key in ("ordering", "strategy"):
        if data.get(key) is not None:
            kw[key] = str(data[key])
    if data.get("female_names") is not None:
        names = data["female_names"]
        if isinstance(names, str):  # a path to a one-name-per-line file
            names = [n for n in Path(names).read_text(encoding="utf-8").split() if n]
        kw["female_names"] = tuple(names)
    if data.get("dob_weights") is not None:
        kw["dob_weights"] = tuple(float(x) for x in data["dob_weights"])
    elif pop.month_weights is not None:
        kw["dob_weights"] = pop.month_weights  # published birth statistics
    if data.get("search_terms") is not None:
        kw["search_terms"] = tuple(data["search_terms"])
    if kw.get("ordering", "permutation") not in ("sequential", "permutation", "global"):
        raise ConfigError(f"unknown ordering {kw['ordering']!r}")
    if target is HarvestTarget.AMKA_DOB:
        from ..harvester import DobStrategy

        try:
            DobStrategy.parse(kw.get("strategy", "calendar-reversed"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return HarvestPlan(**kw)


def _extractor(data: Mapping[str, Any] | None) -> ExtractorConfig:
    data = dict(data or {})
    _check_keys("corpus.extractor", data, {"anchors", "window", "direction", "identifier_anchors"})
    from ..model import AnnotationKind

    if "anchors" in data:
        data["anchors"] = tuple(data["anchors"])
    if "identifier_anchors" in data:
        data["identifier_anchors"] = tuple((a, AnnotationKind(k)) for a, k in data["identifier_anchors"])
    return ExtractorConfig(**data)


def config_from_dict(data: Mapping[str, Any]) -> ScenarioConfig:
    """Validate a parsed config mapping. Raises :class:`ConfigError`."""
    data = dict(data or {})
    _check_keys("config", data, {"schema_version", "seed", "population", "defenses", "plans", "corpus",
                                 "linkage", "report", "transport"})
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}; this build reads {SCHEMA_VERSION}")
    seed = int(data.get("seed", 0))
    try:
        pop_data = {"trn_exponent": DESK_EXPONENT, "seed": seed, **(data.get("population") or {})}
        pop = PopulationConfig.from_dict(pop_data)
        defenses = DefensePolicy.from_dict(data.get("defenses") or {})

        raw_plans = data.get("plans")
        if raw_plans is None:
            raw_plans = [{"target": t.value} for t in PHASE_ORDER]
        if not isinstance(raw_plans, list):
            raise ConfigError("plans: expected a list")
        plans = tuple(_plan(p, seed, pop) for p in raw_plans)
        order = [PHASE_ORDER.index(p.target) for p in plans]
        if order != sorted(set(order)):
            raise ConfigError("plans must list each target at most once, in pipeline order: "
                              + ", ".join(t.value for t in PHASE_ORDER))

        c = dict(data.get("corpus") or {})
        _check_keys("corpus", c, _names(CorpusConfig))
        c["extractor"] = _extractor(c.get("extractor"))
        if c.get("seed") is None:
            c["seed"] = seed
        corpus = CorpusConfig(**c)
        if corpus.documents < 0 or not 0.0 <= corpus.noise <= 1.0:
            raise ConfigError("corpus: documents must be >= 0 and noise within [0, 1]")

        lk = dict(data.get("linkage") or {})
        _check_keys("linkage", lk, {"rules", "weights"})
        linkage = LinkageConfig(
            rules=tuple(JoinRule.parse(r) for r in lk.get("rules", [r.value for r in DEFAULT_RULES])),
            weights=dict(lk["weights"]) if lk.get("weights") else None,
        )

        rp = dict(data.get("report") or {})
        _check_keys("report", rp, {"targets", "curve_samples"})
        targets = []
        for t in rp.get("targets") or []:
            t = {"path": t} if isinstance(t, str) else dict(t)
            _check_keys("report.targets[]", t, {"path", "format"})
            fmt = t.get("format") or ("records" if str(t["path"]).endswith((".jsonl", ".json")) else "csv")
            if fmt not in ("csv", "records"):
                raise ConfigError(f"unknown report format {fmt!r}")
            targets.append(ReportTarget(str(t["path"]), fmt))
        report = ReportConfig(tuple(targets), int(rp.get("curve_samples", 50)))
        if report.curve_samples < 2:
            raise ConfigError("report.curve_samples must be at least 2")

        transport = data.get("transport", "in-process")
        if transport not in ("in-process", "wire"):
            raise ConfigError(f"unknown transport {transport!r}")
    except ConfigError:
        raise
    except (PopulationError, ValueError, TypeError, KeyError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    return ScenarioConfig(seed, pop, defenses, plans, corpus, linkage, report, transport, version)


def load_config_dict(path: str | Path) -> dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    return data


def load_config(path: str | Path) -> ScenarioConfig:
    return config_from_dict(load_config_dict(path))


def set_key(data: dict[str, Any], dotted: str, value: Any) -> dict[str, Any]:
    """Return a copy of ``data`` with ``dotted`` set; ``plans.*.x`` sets ``x`` on every plan."""
    out = copy.deepcopy(data)
    parts = dotted.split(".")
    if parts[0] == "plans" and parts[1] == "*":
        plans = out.get("plans")
        if plans is None:
            plans = [{"target": t.value} for t in PHASE_ORDER]
        for p in plans:
            node = p
            for k in parts[2:-1]:
                node = node.setdefault(k, {})
            node[parts[-1]] = value
        out["plans"] = plans
        return out
    node = out
    for k in parts[:-1]:
        if not isinstance(node.get(k), dict):
            node[k] = {}
        node = node[k]
    node[parts[-1]] = value
    return out


def config_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    """Plain mapping that :func:`config_from_dict` accepts back."""
    pop = cfg.population.to_dict()
    return {
        "schema_version": cfg.schema_version,
        "seed": cfg.seed,
        "transport": cfg.transport,
        "population": pop,
        "defenses": cfg.defenses.to_dict(),
        "plans": [
            {
                "target": p.target.value,
                "partitions": list(p.partitions) if p.partitions is not None else None,
                "ordering": p.ordering,
                "exponent": p.exponent,
                "seed": p.seed,
                "year_range": list(p.year_range),
                "female_names": list(p.female_names) if p.female_names is not None else None,
                "strategy": p.strategy,
                "dob_weights": list(p.dob_weights) if p.dob_weights is not None else None,
                "search_terms": list(p.search_terms),
                "engine": engine_to_dict(p.engine),
            }
            for p in cfg.plans
        ],
        "corpus": {
            "documents": cfg.corpus.documents,
            "seed": cfg.corpus.seed,
            "noise": cfg.corpus.noise,
            "sanitize": cfg.corpus.sanitize,
            "templates": cfg.corpus.templates,
            "current_card_probability": cfg.corpus.current_card_probability,
            "extractor": {
                "anchors": list(cfg.corpus.extractor.anchors),
                "identifier_anchors": [[a, k.value] for a, k in cfg.corpus.extractor.identifier_anchors],
                "window": cfg.corpus.extractor.window,
                "direction": cfg.corpus.extractor.direction,
            },
        },
        "linkage": {"rules": [r.value for r in cfg.linkage.rules],
                    "weights": dict(cfg.linkage.weights) if cfg.linkage.weights else None},
        "report": {"targets": [{"path": t.path, "format": t.format} for t in cfg.report.targets],
                   "curve_samples": cfg.report.curve_samples},
    }
