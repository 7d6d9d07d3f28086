"""Geometrically tempered HMC and benchmark tooling."""

from .errors import ConfigError, IntegrationStepError, TemperingSingularityError
from .metrics import (
    DirectionalMetric,
    IdentityMetric,
    IsometricMetric,
    MetricScalars,
    PhaseState,
    TemperedMetric,
    make_metric,
)
from .targets import (
    GaussianMixture,
    ShellMixture,
    TargetDistribution,
    make_benchmark_bimodal,
    make_donut,
    make_standard_gaussian,
    make_swiss_roll,
    make_target,
    make_trajectory_bimodal,
)

__all__ = [
    "ConfigError",
    "IntegrationStepError",
    "TemperingSingularityError",
    "DirectionalMetric",
    "IdentityMetric",
    "IsometricMetric",
    "MetricScalars",
    "PhaseState",
    "TemperedMetric",
    "make_metric",
    "GaussianMixture",
    "ShellMixture",
    "TargetDistribution",
    "make_benchmark_bimodal",
    "make_donut",
    "make_standard_gaussian",
    "make_swiss_roll",
    "make_target",
    "make_trajectory_bimodal",
]

__version__ = "0.1.0"
