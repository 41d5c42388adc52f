"""Benchmark harness: data loading, experiments, sweeps and reports."""

from .data import load_csv, read_table, split_indices, synth_1d, synth_1d_arrays, synth_1d_test_arrays
from .experiment import (
    PRESETS,
    CellSpec,
    DatasetSpec,
    ExperimentConfig,
    MetricsRow,
    SweepAxis,
    prepare_split,
    run_experiment,
    sweep,
)
from .metrics import mean_nlpd, rmse
from .report import ReportFormat, emit_report, render_report

__all__ = [
    "load_csv",
    "read_table",
    "split_indices",
    "synth_1d",
    "synth_1d_arrays",
    "synth_1d_test_arrays",
    "PRESETS",
    "CellSpec",
    "DatasetSpec",
    "ExperimentConfig",
    "MetricsRow",
    "SweepAxis",
    "prepare_split",
    "run_experiment",
    "sweep",
    "mean_nlpd",
    "rmse",
    "ReportFormat",
    "emit_report",
    "render_report",
]
