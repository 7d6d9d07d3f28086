"""Experiment configuration: declarative TOML in, validated dataclasses out.

A config names one target, a tuning block, and a list of kernel entries.
The run grid is the cross product of each kernel entry with the
temperature list (for kernels on a tempered metric) or with the delta list
(for acceptance-targeting kernels).  Unknown keys are rejected; every
experiment must carry an explicit seed.
"""

from __future__ import annotations

import dataclasses
import os
import sys

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import ConfigError
from ..targets import TargetDistribution, make_target

_EXPERIMENT_KEYS = {"name", "seed", "n_samples", "burn_in", "output_dir"}
_TARGET_KEYS = {"name", "dim", "start"}
_TUNING_KEYS = {
    "adapt_iters",
    "rounds",
    "pilot_iters",
    "tau_grid",
    "n_grid",
    "delta",
    "accuracy_target",
}
_KERNEL_KEYS = {
    "kernel",
    "metric",
    "gamma",
    "direction",
    "epsilon",
    "tau",
    "n_steps",
    "delta",
    "n_max",
    "max_depth",
}
_KERNEL_NAMES = {"hmc", "nuts", "chmc", "vlt-chmc", "mmala"}
_METRIC_KINDS = {"identity", "isometric", "directional"}
_TRAJECTORY_KEYS = {
    "temperature",
    "k0",
    "t_total",
    "marker_dt",
    "n_trajectories",
    "epsilon",
}


@dataclasses.dataclass(frozen=True)
class TuningSpec:
    adapt_iters: int = 400
    rounds: int = 2
    pilot_iters: int = 200
    tau_grid: tuple[float, ...] | None = None
    n_grid: int = 8
    delta: float = 0.7
    accuracy_target: float = 0.9


@dataclasses.dataclass(frozen=True)
class TrajectorySpec:
    """Settings for the equal-energy trajectory figure (2-d targets only)."""

    temperature: float = 15.0
    k0: float = 0.8
    t_total: float = 3.0
    marker_dt: float = 0.25
    n_trajectories: int = 8
    epsilon: float = 0.01


@dataclasses.dataclass(frozen=True)
class KernelSpec:
    """One kernel entry of the config; None means 'tune this'."""

    kernel: str
    metric: str = "identity"
    gamma: float | None = None
    direction: object = None  # unit vector, or the string "random"
    epsilon: float | None = None
    tau: float | None = None
    n_steps: int | None = None
    delta: float | None = None
    n_max: int = 10_000
    max_depth: int = 10

    @property
    def tempered(self) -> bool:
        return self.metric != "identity"

    def label(self) -> str:
        if self.metric == "identity":
            return self.kernel
        return f"{self.kernel}/{self.metric}"


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    n_samples: int
    burn_in: int
    output_dir: str
    target_name: str
    target: TargetDistribution
    start: np.ndarray | None
    tuning: TuningSpec
    kernels: tuple[KernelSpec, ...]
    temperatures: tuple[float, ...]
    deltas: tuple[float, ...]
    trajectories: TrajectorySpec = TrajectorySpec()

    def grid(self):
        """Run cells in deterministic config order.

        Yields (kernel_spec, temperature, delta); temperature is None for
        identity-metric kernels, delta is None for tempered kernels (their
        step-size statistic targets the accuracy value instead).
        """
        for spec in self.kernels:
            if spec.tempered:
                for temp in self.temperatures:
                    yield spec, temp, None
            else:
                for delta in self.deltas if spec.delta is None else (spec.delta,):
                    yield spec, None, delta


def _require_keys(table: dict, allowed: set, where: str):
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in [{where}]")


def _positive_int(table, key, where, default=None, minimum=0):
    value = table.get(key, default)
    if value is None:
        raise ConfigError(f"missing required key {key!r} in [{where}]")
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigError(f"{where}.{key} must be an integer >= {minimum}")
    return value


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate a TOML experiment file."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    allowed_top = {
        "experiment",
        "target",
        "tuning",
        "kernels",
        "temperatures",
        "deltas",
        "trajectories",
    }
    _require_keys(raw, allowed_top, "top level")

    exp = raw.get("experiment")
    if not isinstance(exp, dict):
        raise ConfigError("missing [experiment] table")
    _require_keys(exp, _EXPERIMENT_KEYS, "experiment")
    if "seed" not in exp:
        raise ConfigError("experiment.seed is required (reproducibility)")
    seed = _positive_int(exp, "seed", "experiment")
    n_samples = _positive_int(exp, "n_samples", "experiment", minimum=1)
    burn_in = _positive_int(exp, "burn_in", "experiment", default=0)
    if not n_samples > burn_in:
        raise ConfigError("need n_samples > burn_in")
    name = exp.get("name", "experiment")
    output_dir = os.environ.get("BENCH_OUTPUT_DIR") or exp.get("output_dir", "bench-out")

    tgt = raw.get("target")
    if not isinstance(tgt, dict) or "name" not in tgt:
        raise ConfigError("missing [target] table with a name")
    _require_keys(tgt, _TARGET_KEYS, "target")
    target_name = tgt["name"]
    overrides = {k: v for k, v in tgt.items() if k not in ("name", "start")}
    try:
        target = make_target(target_name, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    start = tgt.get("start")
    if start is not None:
        start = np.asarray(start, dtype=float)
        if start.shape != (target.dim,):
            raise ConfigError(f"target.start must have length {target.dim}")

    tun = raw.get("tuning", {})
    _require_keys(tun, _TUNING_KEYS, "tuning")
    tau_grid = tun.get("tau_grid")
    if tau_grid is not None:
        tau_grid = tuple(float(t) for t in tau_grid)
        if len(tau_grid) < 1 or list(tau_grid) != sorted(tau_grid):
            raise ConfigError("tuning.tau_grid must be ascending")
    tuning = TuningSpec(
        adapt_iters=_positive_int(tun, "adapt_iters", "tuning", default=400, minimum=1),
        rounds=_positive_int(tun, "rounds", "tuning", default=2, minimum=1),
        pilot_iters=_positive_int(tun, "pilot_iters", "tuning", default=200, minimum=2),
        tau_grid=tau_grid,
        n_grid=_positive_int(tun, "n_grid", "tuning", default=8, minimum=2),
        delta=float(tun.get("delta", 0.7)),
        accuracy_target=float(tun.get("accuracy_target", 0.9)),
    )
    if not 0.0 < tuning.delta < 1.0 or not 0.0 < tuning.accuracy_target < 1.0:
        raise ConfigError("tuning targets must lie in (0, 1)")

    entries = raw.get("kernels", [])
    if not isinstance(entries, list):
        raise ConfigError("kernels must be an array of tables")
    kernels = []
    for i, entry in enumerate(entries):
        _require_keys(entry, _KERNEL_KEYS, f"kernels[{i}]")
        if entry.get("kernel") not in _KERNEL_NAMES:
            raise ConfigError(
                f"kernels[{i}].kernel must be one of {sorted(_KERNEL_NAMES)}"
            )
        metric = entry.get("metric", "identity")
        if metric not in _METRIC_KINDS:
            raise ConfigError(f"kernels[{i}].metric must be one of {sorted(_METRIC_KINDS)}")
        if entry["kernel"] in ("hmc", "nuts") and metric != "identity":
            raise ConfigError(f"kernels[{i}]: {entry['kernel']} uses the identity metric")
        gamma = entry.get("gamma")
        direction = entry.get("direction")
        if metric == "directional":
            if gamma is None:
                raise ConfigError(f"kernels[{i}]: directional metric requires gamma")
            if direction is None:
                direction = "random"
            if not (isinstance(direction, str) and direction == "random"):
                direction = np.asarray(direction, dtype=float)
                if direction.shape != (target.dim,):
                    raise ConfigError(
                        f"kernels[{i}].direction must have length {target.dim}"
                    )
        kernels.append(
            KernelSpec(
                kernel=entry["kernel"],
                metric=metric,
                gamma=float(gamma) if gamma is not None else None,
                direction=direction,
                epsilon=float(entry["epsilon"]) if "epsilon" in entry else None,
                tau=float(entry["tau"]) if "tau" in entry else None,
                n_steps=entry.get("n_steps"),
                delta=float(entry["delta"]) if "delta" in entry else None,
                n_max=entry.get("n_max", 10_000),
                max_depth=entry.get("max_depth", 10),
            )
        )

    trj = raw.get("trajectories", {})
    _require_keys(trj, _TRAJECTORY_KEYS, "trajectories")
    trajectories = TrajectorySpec(
        temperature=float(trj.get("temperature", 15.0)),
        k0=float(trj.get("k0", 0.8)),
        t_total=float(trj.get("t_total", 3.0)),
        marker_dt=float(trj.get("marker_dt", 0.25)),
        n_trajectories=_positive_int(trj, "n_trajectories", "trajectories", default=8),
        epsilon=float(trj.get("epsilon", 0.01)),
    )
    if trajectories.temperature < 1.0 or trajectories.k0 <= 0.0:
        raise ConfigError("trajectories needs temperature >= 1 and k0 > 0")
    if trajectories.epsilon <= 0.0 or trajectories.t_total <= 0.0 or trajectories.marker_dt <= 0.0:
        raise ConfigError("trajectories step and time settings must be positive")

    temperatures = tuple(float(t) for t in raw.get("temperatures", [5.0]))
    if any(t < 1.0 for t in temperatures):
        raise ConfigError("temperatures must be >= 1")
    deltas = tuple(float(d) for d in raw.get("deltas", [tuning.delta]))
    if any(not 0.0 < d < 1.0 for d in deltas):
        raise ConfigError("deltas must lie in (0, 1)")

    return ExperimentConfig(
        name=name,
        seed=seed,
        n_samples=n_samples,
        burn_in=burn_in,
        output_dir=output_dir,
        target_name=target_name,
        target=target,
        start=start,
        tuning=tuning,
        kernels=tuple(kernels),
        temperatures=temperatures,
        deltas=deltas,
        trajectories=trajectories,
    )
