"""Benchmark harness: configuration, orchestration, reporting and the CLI."""

from .config import ALL_METHODS, ENV_PREFIX, ConfigError, RunConfig, load_config, parse_config
from .report import CSV_HEADER, MANIFEST_SCHEMA, emit_report, load_manifest, read_results_csv
from .runner import BenchmarkResult, CellFailure, ResultRow, run_benchmark, run_cell

__all__ = [
    "ALL_METHODS",
    "ENV_PREFIX",
    "ConfigError",
    "RunConfig",
    "load_config",
    "parse_config",
    "CSV_HEADER",
    "MANIFEST_SCHEMA",
    "emit_report",
    "load_manifest",
    "read_results_csv",
    "BenchmarkResult",
    "CellFailure",
    "ResultRow",
    "run_benchmark",
    "run_cell",
]
