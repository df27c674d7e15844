"""Data ingestion, experiment orchestration and the command-line interface."""

from .experiments import (
    ExperimentReport,
    MethodResult,
    dumps,
    holdout,
    loocv,
    monte_carlo,
    spectra_report,
    spectra_table,
    worker_count,
)
from .io import DatasetTable, ingest_csv, write_csv

__all__ = [
    "DatasetTable",
    "ExperimentReport",
    "MethodResult",
    "dumps",
    "holdout",
    "ingest_csv",
    "loocv",
    "monte_carlo",
    "spectra_report",
    "spectra_table",
    "worker_count",
    "write_csv",
]
