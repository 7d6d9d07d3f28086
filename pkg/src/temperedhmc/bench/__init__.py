"""Benchmark harness: config parsing, grid execution, SVG reports."""

from .config import (
    ExperimentConfig,
    KernelSpec,
    TrajectorySpec,
    TuningSpec,
    config_from_dict,
    load_config,
)
from .runner import (
    RESULT_COLUMNS,
    build_kernel,
    build_metric,
    generate_trajectories,
    run_cell,
    run_experiment,
    trace_svg,
    trajectories_svg,
    write_trace,
    write_trajectories,
)

__all__ = [
    "ExperimentConfig",
    "KernelSpec",
    "TrajectorySpec",
    "TuningSpec",
    "config_from_dict",
    "load_config",
    "RESULT_COLUMNS",
    "build_kernel",
    "build_metric",
    "generate_trajectories",
    "run_cell",
    "run_experiment",
    "trace_svg",
    "trajectories_svg",
    "write_trace",
    "write_trajectories",
]
