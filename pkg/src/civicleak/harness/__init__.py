"""Scenario configuration, orchestration, reports and the command line."""

from .config import (
    SCHEMA_VERSION,
    ConfigError,
    CorpusConfig,
    LinkageConfig,
    ReportConfig,
    ReportTarget,
    ScenarioConfig,
    config_from_dict,
    config_to_dict,
    load_config,
)
from .report import COLUMNS, MetricsReport, emit_report, load_report, sample_curve
from .scenario import PhaseError, ScenarioRun, build_world, run_pipeline, run_scenario, serve

__all__ = [
    "COLUMNS", "SCHEMA_VERSION", "ConfigError", "CorpusConfig", "LinkageConfig", "MetricsReport", "PhaseError",
    "ReportConfig", "ReportTarget", "ScenarioConfig", "ScenarioRun", "build_world", "config_from_dict",
    "config_to_dict", "emit_report", "load_config", "load_report", "run_pipeline", "run_scenario",
    "sample_curve", "serve",
]
