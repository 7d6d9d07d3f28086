"""Experiment execution: tuning, sampling, diagnostics, file emission.

Grid cells are independent; they run in a process pool and merge in config
order, so identical configs and seeds yield byte-identical CSVs.  Every
cell derives its randomness from the experiment seed through
``spawn_chain_seeds`` in grid order.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import math
import os
import sys

import numpy as np

from ..errors import ConfigError
from ..integrators import STEP_FAILURES, adaptive_step_from_context, leapfrog_chain
from ..metrics import DirectionalMetric, IdentityMetric, IsometricMetric
from ..samplers import (
    ChainRecord,
    ChmcKernel,
    HmcKernel,
    MmalaKernel,
    NutsKernel,
    VltChmcKernel,
    spawn_chain_seeds,
    velocity_with_kinetic_energy,
)
from ..targets import ShellMixture
from ..tuning import (
    _kernel_with_path_length,
    alternate_tune,
    esjd_pathlength_search,
    tune_step_size,
)
from . import svg
from .config import ExperimentConfig, KernelSpec, TrajectorySpec

RESULT_COLUMNS = [
    "target",
    "kernel",
    "metric",
    "temperature",
    "gamma",
    "delta",
    "epsilon",
    "tau",
    "n_samples",
    "burn_in",
    "grad_evals",
    "accept_rate",
    "stat_group",
    "min_ess",
    "min_ess_per_100",
    "min_ess_per_grad",
]

DEFAULT_EPS0 = 0.1
_TRAJ_COLORS = {"hmc": "#777777", "ithmc": "#1c7a4c", "dthmc": "#b03030"}


def build_metric(spec: KernelSpec, target, temperature):
    if spec.metric == "identity":
        return IdentityMetric(target)
    if temperature is None:
        raise ConfigError("tempered metric needs a temperature")
    if spec.metric == "isometric":
        return IsometricMetric(target, temperature)
    if isinstance(spec.direction, str):
        return DirectionalMetric(
            target, temperature, spec.gamma, random_direction=True
        )
    return DirectionalMetric(target, temperature, spec.gamma, u=spec.direction)


def build_kernel(spec: KernelSpec, target, temperature):
    eps = spec.epsilon if spec.epsilon is not None else DEFAULT_EPS0
    if spec.kernel == "hmc":
        return HmcKernel(target, eps, spec.n_steps or 10)
    if spec.kernel == "nuts":
        return NutsKernel(target, eps, max_depth=spec.max_depth)
    metric = build_metric(spec, target, temperature)
    if spec.kernel == "chmc":
        return ChmcKernel(metric, eps, spec.n_steps or 10)
    if spec.kernel == "vlt-chmc":
        return VltChmcKernel(metric, eps, spec.tau or 1.0, n_max=spec.n_max)
    if spec.kernel == "mmala":
        return MmalaKernel(metric, eps)
    raise ConfigError(f"unknown kernel {spec.kernel!r}")


def _default_tau_grid(config: ExperimentConfig):
    if config.tuning.tau_grid is not None:
        return list(config.tuning.tau_grid)
    return list(np.geomspace(0.25, 8.0, config.tuning.n_grid))


def _cell_start(config: ExperimentConfig, seed: int) -> np.ndarray:
    if config.start is not None:
        return config.start
    rng = np.random.default_rng(seed)
    return config.target.sample_exact(rng, 1)[0]


def _has_path_length(spec: KernelSpec) -> bool:
    return spec.kernel in ("hmc", "chmc", "vlt-chmc")


def run_cell(config: ExperimentConfig, spec: KernelSpec, temperature, delta, cell_seed):
    """Tune (what is not fixed), sample one chain, and diagnose it.

    Returns (rows, warnings): one result row per statistic group, plus any
    step-failure warnings.
    """
    tune_seed, start_seed, chain_seed = spawn_chain_seeds(cell_seed, 3)
    target = config.target
    theta0 = _cell_start(config, start_seed)
    kernel = build_kernel(spec, target, temperature)
    stat_target = config.tuning.accuracy_target if spec.tempered else delta

    eps_fixed = spec.epsilon is not None
    path_fixed = (
        spec.tau is not None if spec.kernel == "vlt-chmc" else spec.n_steps is not None
    )
    tunable_path = _has_path_length(spec) and not path_fixed
    tau = spec.tau
    if not eps_fixed and tunable_path:
        _, tau, kernel = alternate_tune(
            kernel,
            theta0,
            config.tuning.adapt_iters,
            stat_target,
            tau_grid=_default_tau_grid(config),
            pilot_iters=config.tuning.pilot_iters,
            rounds=config.tuning.rounds,
            seed=tune_seed,
        )
    elif not eps_fixed:
        kernel, _, _ = tune_step_size(
            kernel, theta0, config.tuning.adapt_iters, stat_target, seed=tune_seed
        )
    elif tunable_path:
        tau = esjd_pathlength_search(
            kernel,
            _default_tau_grid(config),
            config.tuning.pilot_iters,
            theta0,
            seed=tune_seed,
        )
        kernel = _kernel_with_path_length(kernel, tau)

    rng = np.random.default_rng(chain_seed)
    state = kernel.init_state(theta0)
    record = ChainRecord(kernel.kernel_name, chain_seed)
    failures = 0
    total_iters = config.burn_in + config.n_samples
    for i in range(total_iters):
        state, info = kernel.step(state, rng)
        if info.step_failed or info.truncated:
            failures += 1
        if i >= config.burn_in:
            record.append(state.theta, info.accepted, info.energy, info.grad_evals)

    warnings = []
    fail_rate = failures / total_iters
    if fail_rate > 0.5:
        warnings.append(
            f"{spec.label()} T={temperature}: step-failure rate {fail_rate:.0%}"
        )

    base = {
        "target": config.target_name,
        "kernel": spec.kernel,
        "metric": spec.metric,
        "temperature": temperature,
        "gamma": spec.gamma,
        "delta": delta,
        "epsilon": kernel.epsilon,
        "tau": tau if spec.kernel == "vlt-chmc" or tau is not None else None,
        "n_samples": config.n_samples,
        "burn_in": config.burn_in,
        "grad_evals": record.grad_eval_total,
        "accept_rate": record.accept_rate(),
    }
    # local import: diagnostics pulls scipy.stats, keep worker startup lean
    from ..diagnostics import ess_report, radial_series

    samples = record.samples_array()
    rows = []
    report = ess_report(
        samples,
        target.coordinate_means(),
        target.coordinate_variances(),
        record.grad_eval_total,
    )
    rows.append(
        base
        | {
            "stat_group": "coords",
            "min_ess": report.min_ess,
            "min_ess_per_100": report.ess_per_100_samples,
            "min_ess_per_grad": report.ess_per_gradient_budget,
        }
    )
    if isinstance(target, ShellMixture):
        mean_r, second_r = target.radial_moments
        radial = ess_report(
            radial_series(samples),
            [mean_r],
            [second_r - mean_r**2],
            record.grad_eval_total,
        )
        rows.append(
            base
            | {
                "stat_group": "radial",
                "min_ess": radial.min_ess,
                "min_ess_per_100": radial.ess_per_100_samples,
                "min_ess_per_grad": radial.ess_per_gradient_budget,
            }
        )
    return rows, warnings


def _cell_worker(args):
    return run_cell(*args)


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".12g")
    return str(value)


def write_rows(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow([_format_value(row.get(c)) for c in RESULT_COLUMNS])


def run_experiment(config: ExperimentConfig, parallel: bool = True):
    """Execute the whole grid and write results under the output directory.

    Returns the results CSV path.  Cells execute in a process pool (unless
    ``parallel`` is off) and merge in config order.
    """
    cells = list(config.grid())
    cell_seeds = spawn_chain_seeds(config.seed, max(len(cells), 1))
    args = [
        (config, spec, temp, delta, cell_seeds[i])
        for i, (spec, temp, delta) in enumerate(cells)
    ]
    if parallel and len(args) > 1:
        workers = min(len(args), os.cpu_count() or 1)
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_cell_worker, args))
    else:
        outcomes = [run_cell(*a) for a in args]

    rows = []
    warnings = []
    for cell_rows, cell_warnings in outcomes:
        rows.extend(cell_rows)
        warnings.extend(cell_warnings)
    os.makedirs(config.output_dir, exist_ok=True)
    out_path = os.path.join(config.output_dir, f"{config.name}-results.csv")
    write_rows(out_path, rows)
    meta_path = os.path.join(config.output_dir, f"{config.name}-meta.txt")
    with open(meta_path, "w", encoding="utf-8") as fh:
        fh.write(f"name: {config.name}\n")
        fh.write(f"seed: {config.seed}\n")
        fh.write(f"target: {config.target_name}\n")
        fh.write(f"n_samples: {config.n_samples}\n")
        fh.write(f"burn_in: {config.burn_in}\n")
        for spec in config.kernels:
            fh.write(f"kernel: {spec.label()}\n")
    for line in warnings:
        print(f"warning: {line}", file=sys.stderr)
    return out_path


# ---------------------------------------------------------------------------
# trajectories


@dataclasses.dataclass(frozen=True)
class TrajectoryPath:
    kind: str  # hmc | ithmc | dthmc
    t: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    log_pi: np.ndarray


def _tempered_trajectory(metric, theta0, v0, eps, t_total, n_max=200_000):
    ctx = metric.context(theta0)
    t = [0.0]
    thetas = [ctx.theta]
    vs = [np.asarray(v0, dtype=float)]
    lps = [ctx.log_pi]
    v = vs[0]
    while t[-1] < t_total:
        if len(t) > n_max:
            raise RuntimeError("trajectory step budget exceeded")
        eta_prev = ctx.eta
        ctx, v, _ = adaptive_step_from_context(metric, ctx, v, eps)
        t.append(t[-1] + 0.5 * eps * (eta_prev + ctx.eta))
        thetas.append(ctx.theta)
        vs.append(v)
        lps.append(ctx.log_pi)
    return np.array(t), np.array(thetas), np.array(vs), np.array(lps)


def generate_trajectories(config: ExperimentConfig):
    """Equal-energy trajectories of HMC and the two tempered flavors.

    All start at the same mode with kinetic energy k0 and run for the same
    physical duration.  Directions are drawn uniformly per trajectory index
    (shared across kernels) from a 90-degree cone facing the farthest mode,
    so every launch heads into the density valley the figure is about; a
    single-mode target gets the full circle.
    """
    traj = config.trajectories
    target = config.target
    if target.dim != 2:
        raise ConfigError("trajectory plots need a 2-d target")
    if config.start is not None:
        theta0 = config.start
    elif hasattr(target, "means"):
        theta0 = np.asarray(target.means[0], dtype=float)
    else:
        raise ConfigError("no start point for trajectories")
    axis = None
    means = np.asarray(getattr(target, "means", np.zeros((0, 2))), dtype=float)
    if len(means) > 1:
        far = means[int(np.argmax(np.linalg.norm(means - theta0, axis=1)))]
        norm = np.linalg.norm(far - theta0)
        if norm > 0.0:
            axis = (far - theta0) / norm
    iso = IsometricMetric(target, traj.temperature)
    direc = DirectionalMetric(target, traj.temperature, 1.0, u=np.array([1.0, 0.0]))
    rng = np.random.default_rng(config.seed)
    paths = []
    for _ in range(traj.n_trajectories):
        if axis is None:
            phi = rng.uniform(0.0, 2.0 * math.pi)
            base = np.array([1.0, 0.0])
        else:
            phi = rng.uniform(-0.25 * math.pi, 0.25 * math.pi)
            base = axis
        cos_p, sin_p = math.cos(phi), math.sin(phi)
        w = np.array(
            [cos_p * base[0] - sin_p * base[1], sin_p * base[0] + cos_p * base[1]]
        )
        # identity mass: p0 with k0 = |p0|^2/2
        p0 = math.sqrt(2.0 * traj.k0) * w
        n_lf = max(1, math.ceil(traj.t_total / traj.epsilon))
        theta, p = theta0.copy(), p0.copy()
        ts, ths, vs, lps = [0.0], [theta], [p], [target.log_density(theta)]
        try:
            for _ in range(n_lf):
                theta, p, lp, _, _ = leapfrog_chain(
                    target, theta, p, traj.epsilon, 1
                )
                ts.append(ts[-1] + traj.epsilon)
                ths.append(theta)
                vs.append(p)
                lps.append(lp)
            paths.append(
                TrajectoryPath("hmc", np.array(ts), np.array(ths), np.array(vs), np.array(lps))
            )
        except STEP_FAILURES:
            pass
        for kind, metric in (("ithmc", iso), ("dthmc", direc)):
            ctx0 = metric.context(theta0)
            v0 = velocity_with_kinetic_energy(metric, ctx0, traj.k0, w)
            try:
                t_arr, th_arr, v_arr, lp_arr = _tempered_trajectory(
                    metric, theta0, v0, traj.epsilon, traj.t_total
                )
                paths.append(TrajectoryPath(kind, t_arr, th_arr, v_arr, lp_arr))
            except STEP_FAILURES:
                pass
    return paths


def _markers_at_equal_times(path: TrajectoryPath, dt: float):
    """Positions interpolated at multiples of dt along the physical clock."""
    t_max = path.t[-1]
    times = np.arange(dt, t_max + 1e-12, dt)
    xs = np.interp(times, path.t, path.theta[:, 0])
    ys = np.interp(times, path.t, path.theta[:, 1])
    return np.column_stack([xs, ys])


def trajectories_svg(config: ExperimentConfig, paths):
    traj = config.trajectories
    target = config.target
    pts = [p.theta for p in paths]
    modes = np.asarray(getattr(target, "means", np.zeros((0, 2))), dtype=float)
    all_pts = np.vstack(pts + [modes]) if (pts or len(modes)) else np.zeros((1, 2))
    pad = 0.8
    frame = svg.Frame(
        x_min=float(all_pts[:, 0].min() - pad),
        x_max=float(all_pts[:, 0].max() + pad),
        y_min=float(all_pts[:, 1].min() - pad),
        y_max=float(all_pts[:, 1].max() + pad),
    )
    elements = [svg.axes(frame, "theta_0", "theta_1")]
    px_per_unit = (frame.width - 2 * frame.margin) / (frame.x_max - frame.x_min)
    for mode in modes:
        elements.append(svg.circle(frame, mode[0], mode[1], 2.0 * px_per_unit, "#3366cc"))
    for path in paths:
        color = _TRAJ_COLORS[path.kind]
        elements.append(svg.polyline(frame, path.theta[:, 0], path.theta[:, 1], color, opacity=0.85))
        for marker in _markers_at_equal_times(path, traj.marker_dt):
            elements.append(svg.cross(frame, marker[0], marker[1], 4.0, color))
    y_legend = 18
    for kind, color in _TRAJ_COLORS.items():
        elements.append(svg.text(frame.width - 150, y_legend, kind, size=12))
        elements.append(
            f'<line x1="{frame.width - 180:.6g}" y1="{y_legend - 4:.6g}" '
            f'x2="{frame.width - 156:.6g}" y2="{y_legend - 4:.6g}" stroke="{color}" stroke-width="2"/>'
        )
        y_legend += 16
    return svg.document(elements)


def write_trajectories(config: ExperimentConfig):
    """Render the trajectory figure and dump the raw paths as CSV."""
    paths = generate_trajectories(config)
    os.makedirs(config.output_dir, exist_ok=True)
    svg_path = os.path.join(config.output_dir, f"{config.name}-trajectories.svg")
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(trajectories_svg(config, paths))
    csv_path = os.path.join(config.output_dir, f"{config.name}-trajectories.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["trajectory", "kernel", "step", "t", "theta_0", "theta_1", "v_0", "v_1", "log_pi"]
        )
        for idx, path in enumerate(paths):
            for step in range(path.t.shape[0]):
                writer.writerow(
                    [idx, path.kind, step, _format_value(float(path.t[step]))]
                    + [_format_value(float(x)) for x in path.theta[step]]
                    + [_format_value(float(x)) for x in path.v[step]]
                    + [_format_value(float(path.log_pi[step]))]
                )
    return svg_path, csv_path


# ---------------------------------------------------------------------------
# trace plots


def load_chain_csv(path):
    """Samples matrix from a ChainRecord CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"empty chain file {path}")
        theta_cols = [i for i, c in enumerate(header) if c.startswith("theta_")]
        if not theta_cols:
            raise ValueError(f"no coordinate columns in {path}")
        rows = [[float(line[i]) for i in theta_cols] for line in reader]
    if not rows:
        raise ValueError(f"chain file {path} has no samples")
    return np.asarray(rows)


def trace_svg(samples: np.ndarray, coordinate: int) -> str:
    if samples.size == 0:
        raise ValueError("empty chain")
    if not 0 <= coordinate < samples.shape[1]:
        raise ConfigError(
            f"coordinate {coordinate} out of range for d={samples.shape[1]}"
        )
    series = samples[:, coordinate]
    lo, hi = float(series.min()), float(series.max())
    if hi == lo:  # flat line still needs a nonempty frame
        lo, hi = lo - 0.5, hi + 0.5
    frame = svg.Frame(0.0, float(len(series) - 1 or 1), lo, hi)
    elements = [
        svg.axes(frame, "iteration", f"theta_{coordinate}"),
        svg.polyline(frame, np.arange(len(series)), series, "#20508a", width=0.8),
    ]
    return svg.document(elements)


def write_trace(chain_path, coordinate: int, out_path):
    samples = load_chain_csv(chain_path)
    doc = trace_svg(samples, coordinate)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(doc)
    return out_path
