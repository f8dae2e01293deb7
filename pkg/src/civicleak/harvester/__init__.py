"""Attack engine: distributed enumeration, voter brute force, DOB scheduling."""

from .engine import Engine, EngineConfig, ServiceHandle
from .plans import (
    YEAR_RANGE,
    AmkaTarget,
    HarvestPlan,
    HarvestSummary,
    HarvestTarget,
    VoterTarget,
    amka_targets,
    harvest_amka,
    harvest_documents,
    harvest_stats,
    harvest_trn,
    harvest_voter,
    leak_curve,
    mother_prefixes,
    queries_to_fraction,
    seeds_from_trn,
    seeds_from_world,
    time_to_fraction,
    voter_queries,
)
from .schedule import DateOrder, DobRecord, DobStrategy, calendar_dates, expected_total, schedule_dob, simulate
from .store import OutcomeKind, ProbeOutcome, Query, ResultStore

__all__ = [
    "YEAR_RANGE", "AmkaTarget", "DateOrder", "DobRecord", "DobStrategy", "Engine", "EngineConfig",
    "HarvestPlan", "HarvestSummary", "HarvestTarget", "OutcomeKind", "ProbeOutcome", "Query",
    "ResultStore", "ServiceHandle", "VoterTarget", "amka_targets", "calendar_dates", "expected_total",
    "harvest_amka", "harvest_documents", "harvest_stats", "harvest_trn", "harvest_voter", "leak_curve", "mother_prefixes",
    "queries_to_fraction", "schedule_dob", "seeds_from_trn", "seeds_from_world", "simulate",
    "time_to_fraction", "voter_queries",
]
