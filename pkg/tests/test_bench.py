"""Config validation, grid execution, figure emission, CLI exit codes."""

import math
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from temperedhmc.bench.cli import main
from temperedhmc.bench.config import config_from_dict, load_config
from temperedhmc.bench.runner import (
    RESULT_COLUMNS,
    TrajectoryPath,
    _markers_at_equal_times,
    build_kernel,
    build_metric,
    generate_trajectories,
    load_chain_csv,
    run_cell,
    run_experiment,
    trace_svg,
    trajectories_svg,
    write_rows,
    write_trace,
    write_trajectories,
)
from temperedhmc.errors import ConfigError
from temperedhmc.metrics import DirectionalMetric, IdentityMetric, IsometricMetric
from temperedhmc.samplers import (
    ChainRecord,
    ChmcKernel,
    HmcKernel,
    MmalaKernel,
    NutsKernel,
    VltChmcKernel,
)

_SVG_NS = "{http://www.w3.org/2000/svg}"


def _base_dict(outdir, **overrides):
    raw = {
        "experiment": {
            "name": "tiny",
            "seed": 7,
            "n_samples": 80,
            "burn_in": 20,
            "output_dir": str(outdir),
        },
        "target": {"name": "gaussian", "dim": 2},
        "kernels": [
            {"kernel": "hmc", "epsilon": 0.7, "n_steps": 5},
            {"kernel": "chmc", "metric": "isometric", "epsilon": 0.5, "n_steps": 5},
        ],
        "temperatures": [2.0],
    }
    raw.update(overrides)
    return raw


def _traj_dict(outdir, **trajectories):
    settings = {"n_trajectories": 2, "t_total": 0.5, "epsilon": 0.02, "marker_dt": 0.1}
    settings.update(trajectories)
    return {
        "experiment": {"name": "fig", "seed": 3, "n_samples": 10, "output_dir": str(outdir)},
        "target": {"name": "trajectory-bimodal"},
        "trajectories": settings,
    }


# ---------------------------------------------------------------------------
# config


def test_config_roundtrip_and_grid(tmp_path):
    cfg = config_from_dict(_base_dict(tmp_path, deltas=[0.6, 0.8]))
    assert cfg.name == "tiny" and cfg.seed == 7
    assert cfg.target.dim == 2
    cells = list(cfg.grid())
    # identity kernels cross with deltas, tempered kernels with temperatures
    assert [(s.kernel, t, d) for s, t, d in cells] == [
        ("hmc", None, 0.6),
        ("hmc", None, 0.8),
        ("chmc", 2.0, None),
    ]
    assert cells == list(cfg.grid())


def test_config_kernel_delta_overrides_grid(tmp_path):
    raw = _base_dict(tmp_path, deltas=[0.6, 0.8])
    raw["kernels"] = [{"kernel": "nuts", "delta": 0.95}]
    cells = list(config_from_dict(raw).grid())
    assert [(s.kernel, t, d) for s, t, d in cells] == [("nuts", None, 0.95)]


def test_config_rejects_unknown_keys(tmp_path):
    for patch in (
        {"experiment": {"name": "x", "seed": 1, "n_samples": 10, "typo": 1}},
        {"tuning": {"adapt_iter": 100}},
        {"trajectories": {"k_0": 1.0}},
        {"mystery": {}},
    ):
        with pytest.raises(ConfigError):
            config_from_dict(_base_dict(tmp_path, **patch))
    raw = _base_dict(tmp_path)
    raw["kernels"] = [{"kernel": "hmc", "step": 0.1}]
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_config_requires_seed_and_sane_counts(tmp_path):
    raw = _base_dict(tmp_path)
    del raw["experiment"]["seed"]
    with pytest.raises(ConfigError, match="seed"):
        config_from_dict(raw)
    raw = _base_dict(tmp_path)
    raw["experiment"]["n_samples"] = 10
    raw["experiment"]["burn_in"] = 10
    with pytest.raises(ConfigError, match="n_samples > burn_in"):
        config_from_dict(raw)
    raw = _base_dict(tmp_path)
    del raw["target"]
    with pytest.raises(ConfigError, match="target"):
        config_from_dict(raw)
    raw = _base_dict(tmp_path)
    raw["target"] = {"name": "no-such-target"}
    with pytest.raises(ConfigError):
        config_from_dict(raw)
    raw = _base_dict(tmp_path)
    raw["target"]["start"] = [1.0, 2.0, 3.0]
    with pytest.raises(ConfigError, match="length"):
        config_from_dict(raw)


def test_config_kernel_validation(tmp_path):
    cases = [
        {"kernel": "hamiltonian"},
        {"kernel": "chmc", "metric": "euclidean"},
        {"kernel": "nuts", "metric": "isometric"},
        {"kernel": "chmc", "metric": "directional"},  # gamma missing
        {"kernel": "chmc", "metric": "directional", "gamma": 0.8, "direction": [1.0]},
    ]
    for entry in cases:
        raw = _base_dict(tmp_path)
        raw["kernels"] = [entry]
        with pytest.raises(ConfigError):
            config_from_dict(raw)


def test_config_range_validation(tmp_path):
    for patch in (
        {"temperatures": [0.5]},
        {"deltas": [1.2]},
        {"tuning": {"delta": 1.5}},
        {"tuning": {"tau_grid": [2.0, 1.0]}},
        {"trajectories": {"k0": 0.0}},
        {"trajectories": {"epsilon": -0.01}},
    ):
        with pytest.raises(ConfigError):
            config_from_dict(_base_dict(tmp_path, **patch))


def test_load_config_file_handling(tmp_path, monkeypatch):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "missing.toml"))
    bad = tmp_path / "bad.toml"
    bad.write_text("experiment = [broken\n")
    with pytest.raises(ConfigError, match="TOML"):
        load_config(str(bad))
    good = tmp_path / "good.toml"
    good.write_text(
        "[experiment]\n"
        'name = "file-exp"\nseed = 11\nn_samples = 50\n'
        f'output_dir = "{tmp_path}"\n'
        "[target]\n"
        'name = "gaussian"\ndim = 2\n'
        "[[kernels]]\n"
        'kernel = "hmc"\nepsilon = 0.5\nn_steps = 4\n'
    )
    cfg = load_config(str(good))
    assert cfg.name == "file-exp" and cfg.kernels[0].kernel == "hmc"
    monkeypatch.setenv("BENCH_OUTPUT_DIR", str(tmp_path / "forced"))
    assert load_config(str(good)).output_dir == str(tmp_path / "forced")


# ---------------------------------------------------------------------------
# runner dispatch


def test_build_metric_dispatch(tmp_path, gauss2):
    cfg = config_from_dict(_base_dict(tmp_path))
    iden = cfg.kernels[0]
    assert isinstance(build_metric(iden, gauss2, None), IdentityMetric)
    iso = cfg.kernels[1]
    metric = build_metric(iso, gauss2, 4.0)
    assert isinstance(metric, IsometricMetric) and metric.temperature == 4.0
    with pytest.raises(ConfigError, match="temperature"):
        build_metric(iso, gauss2, None)
    raw = _base_dict(tmp_path)
    raw["kernels"] = [
        {"kernel": "chmc", "metric": "directional", "gamma": 0.75},
        {"kernel": "chmc", "metric": "directional", "gamma": 1.0, "direction": [0.0, 1.0]},
    ]
    rand_spec, fixed_spec = config_from_dict(raw).kernels
    rand_metric = build_metric(rand_spec, gauss2, 4.0)
    fixed_metric = build_metric(fixed_spec, gauss2, 4.0)
    assert isinstance(rand_metric, DirectionalMetric) and rand_metric.random_direction
    assert not fixed_metric.random_direction
    assert np.allclose(fixed_metric.u, [0.0, 1.0])


def test_build_kernel_dispatch(tmp_path, gauss2):
    raw = _base_dict(tmp_path)
    raw["kernels"] = [
        {"kernel": "hmc"},
        {"kernel": "nuts", "max_depth": 6},
        {"kernel": "chmc", "metric": "isometric"},
        {"kernel": "vlt-chmc", "metric": "isometric", "n_max": 500},
        {"kernel": "mmala", "metric": "isometric"},
    ]
    specs = config_from_dict(raw).kernels
    hmc = build_kernel(specs[0], gauss2, None)
    assert isinstance(hmc, HmcKernel) and hmc.epsilon == 0.1 and hmc.n_steps == 10
    nuts = build_kernel(specs[1], gauss2, None)
    assert isinstance(nuts, NutsKernel) and nuts.max_depth == 6
    assert isinstance(build_kernel(specs[2], gauss2, 3.0), ChmcKernel)
    vlt = build_kernel(specs[3], gauss2, 3.0)
    assert isinstance(vlt, VltChmcKernel) and vlt.tau == 1.0 and vlt.n_max == 500
    assert isinstance(build_kernel(specs[4], gauss2, 3.0), MmalaKernel)


# ---------------------------------------------------------------------------
# cells and experiments


def test_run_cell_row_schema(tmp_path):
    cfg = config_from_dict(_base_dict(tmp_path))
    rows, warnings = run_cell(cfg, cfg.kernels[0], None, 0.7, cell_seed=99)
    assert warnings == []
    assert len(rows) == 1
    row = rows[0]
    assert set(row) == set(RESULT_COLUMNS)
    assert row["stat_group"] == "coords"
    assert 0.0 <= row["accept_rate"] <= 1.0
    assert row["min_ess"] > 0 and row["grad_evals"] > 0
    assert row["epsilon"] == 0.7 and row["temperature"] is None


def test_run_cell_emits_radial_rows_for_shell_targets(tmp_path):
    raw = _base_dict(tmp_path)
    raw["target"] = {"name": "donut25", "dim": 5}
    raw["kernels"] = [{"kernel": "mmala", "metric": "isometric", "epsilon": 0.05}]
    raw["experiment"]["n_samples"] = 40
    raw["experiment"]["burn_in"] = 10
    cfg = config_from_dict(raw)
    rows, _ = run_cell(cfg, cfg.kernels[0], 2.0, None, cell_seed=5)
    assert [r["stat_group"] for r in rows] == ["coords", "radial"]


def test_run_cell_warns_on_persistent_step_failures(tmp_path):
    raw = _base_dict(tmp_path)
    raw["target"] = {"name": "bimodal", "start": [0.0, -4.0]}
    raw["kernels"] = [
        {"kernel": "vlt-chmc", "metric": "isometric", "epsilon": 1e-3, "tau": 5.0, "n_max": 50}
    ]
    raw["experiment"]["n_samples"] = 30
    raw["experiment"]["burn_in"] = 0
    raw["temperatures"] = [15.0]
    cfg = config_from_dict(raw)
    _, warnings = run_cell(cfg, cfg.kernels[0], 15.0, None, cell_seed=12345)
    assert len(warnings) == 1 and "step-failure rate" in warnings[0]


def test_run_experiment_outputs_and_determinism(tmp_path):
    cfg = config_from_dict(_base_dict(tmp_path))
    out = run_experiment(cfg, parallel=False)
    assert out == str(tmp_path / "tiny-results.csv")
    first = open(out, "rb").read()
    assert first.decode().splitlines()[0] == ",".join(RESULT_COLUMNS)
    meta = (tmp_path / "tiny-meta.txt").read_text()
    assert "seed: 7" in meta and "kernel: chmc/isometric" in meta
    run_experiment(cfg, parallel=False)
    assert open(out, "rb").read() == first
    run_experiment(cfg, parallel=True)  # pool path merges in config order
    assert open(out, "rb").read() == first


def test_run_experiment_empty_grid(tmp_path):
    cfg = config_from_dict(_base_dict(tmp_path, kernels=[]))
    out = run_experiment(cfg, parallel=False)
    assert open(out, "rb").read() == (",".join(RESULT_COLUMNS) + "\r\n").encode()


def test_write_rows_formatting(tmp_path):
    path = tmp_path / "rows.csv"
    write_rows(path, [dict.fromkeys(RESULT_COLUMNS) | {"min_ess": math.nan, "kernel": "hmc"}])
    header, line = path.read_text().splitlines()
    values = dict(zip(header.split(","), line.split(",")))
    assert values["min_ess"] == "nan"
    assert values["kernel"] == "hmc"
    assert values["temperature"] == ""  # None renders empty


# ---------------------------------------------------------------------------
# trajectories


def test_generate_trajectories_structure(tmp_path):
    cfg = config_from_dict(_traj_dict(tmp_path))
    paths = generate_trajectories(cfg)
    kinds = [p.kind for p in paths]
    assert set(kinds) <= {"hmc", "ithmc", "dthmc"}
    assert kinds.count("hmc") == 2  # none of the flat-target runs fail
    for path in paths:
        assert path.t[0] == 0.0
        assert np.all(np.diff(path.t) > 0.0)
        assert path.theta.shape == (path.t.shape[0], 2)
        assert path.v.shape == path.theta.shape
        if path.kind == "hmc":
            # launch energy 0.8 cannot clear the 7.3 barrier
            assert path.theta[:, 0].max() < 0.0


def test_generate_trajectories_rejects_non_2d(tmp_path):
    raw = _traj_dict(tmp_path)
    raw["target"] = {"name": "gaussian", "dim": 3}
    with pytest.raises(ConfigError, match="2-d"):
        generate_trajectories(config_from_dict(raw))


def test_markers_interpolate_at_equal_times():
    path = TrajectoryPath(
        kind="hmc",
        t=np.array([0.0, 1.0, 2.0]),
        theta=np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]),
        v=np.zeros((3, 2)),
        log_pi=np.zeros(3),
    )
    markers = _markers_at_equal_times(path, 0.5)
    assert np.allclose(markers[:, 0], [0.5, 1.0, 1.5, 2.0])
    assert np.allclose(markers[:, 1], markers[:, 0])


def test_trajectories_svg_content(tmp_path):
    cfg = config_from_dict(_traj_dict(tmp_path))
    paths = [
        TrajectoryPath(
            kind=kind,
            t=np.array([0.0, 0.2, 0.4]),
            theta=np.array([[-4.0, 0.0], [-3.0, 0.5], [-2.0, 0.0]]),
            v=np.zeros((3, 2)),
            log_pi=np.zeros(3),
        )
        for kind in ("hmc", "ithmc")
    ]
    root = ET.fromstring(trajectories_svg(cfg, paths))
    assert len(list(root.iter(_SVG_NS + "polyline"))) == 2
    # equal-time markers at dt=0.1 along t in [0, 0.4]: four per path
    assert len(list(root.iter(_SVG_NS + "path"))) == 8
    assert len(list(root.iter(_SVG_NS + "circle"))) == 2  # one per mode
    labels = {el.text for el in root.iter(_SVG_NS + "text")}
    assert {"hmc", "ithmc", "dthmc"} <= labels


def test_trajectories_svg_empty(tmp_path):
    cfg = config_from_dict(_traj_dict(tmp_path))
    root = ET.fromstring(trajectories_svg(cfg, []))
    assert len(list(root.iter(_SVG_NS + "polyline"))) == 0


def test_write_trajectories_files(tmp_path):
    cfg = config_from_dict(_traj_dict(tmp_path, n_trajectories=1))
    svg_path, csv_path = write_trajectories(cfg)
    root = ET.parse(svg_path).getroot()
    assert root.tag == _SVG_NS + "svg"
    lines = open(csv_path).read().splitlines()
    assert lines[0] == "trajectory,kernel,step,t,theta_0,theta_1,v_0,v_1,log_pi"
    paths = generate_trajectories(cfg)
    assert len(lines) - 1 == sum(p.t.shape[0] for p in paths)


# ---------------------------------------------------------------------------
# traces


def _record_with_samples(samples):
    record = ChainRecord("hmc", seed=0)
    for theta in samples:
        record.append(np.asarray(theta, dtype=float), True, -1.0, 2)
    return record


def test_trace_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    samples = rng.standard_normal((50, 3))
    chain_path = tmp_path / "chain.csv"
    _record_with_samples(samples).to_csv(chain_path)
    loaded = load_chain_csv(chain_path)
    assert np.allclose(loaded, samples)
    out = write_trace(chain_path, 2, tmp_path / "trace.svg")
    assert ET.parse(out).getroot().tag == _SVG_NS + "svg"


def test_trace_flat_line():
    doc = trace_svg(np.full((40, 1), 3.25), 0)
    root = ET.fromstring(doc)
    assert len(list(root.iter(_SVG_NS + "polyline"))) == 1


def test_trace_errors(tmp_path):
    with pytest.raises(ConfigError, match="coordinate"):
        trace_svg(np.zeros((10, 2)), 5)
    with pytest.raises(ValueError, match="empty"):
        trace_svg(np.empty((0, 2)), 0)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ValueError, match="empty"):
        load_chain_csv(empty)
    headed = tmp_path / "headed.csv"
    headed.write_text("iteration,theta_0,accepted,energy\n")
    with pytest.raises(ValueError, match="no samples"):
        load_chain_csv(headed)
    wrong = tmp_path / "wrong.csv"
    wrong.write_text("iteration,x,y\n0,1.0,2.0\n")
    with pytest.raises(ValueError, match="coordinate columns"):
        load_chain_csv(wrong)


# ---------------------------------------------------------------------------
# cli


def _write_toml(path, outdir):
    path.write_text(
        "[experiment]\n"
        'name = "cli-exp"\nseed = 5\nn_samples = 40\nburn_in = 10\n'
        f'output_dir = "{outdir}"\n'
        "[target]\n"
        'name = "gaussian"\ndim = 2\n'
        "[[kernels]]\n"
        'kernel = "hmc"\nepsilon = 0.6\nn_steps = 4\n'
    )


def test_cli_run(tmp_path, capsys):
    cfg_path = tmp_path / "exp.toml"
    _write_toml(cfg_path, tmp_path)
    assert main(["run", str(cfg_path), "--serial"]) == 0
    printed = capsys.readouterr().out.strip()
    assert printed == str(tmp_path / "cli-exp-results.csv")
    assert os.path.exists(printed)


def test_cli_trajectories(tmp_path, capsys):
    cfg_path = tmp_path / "fig.toml"
    cfg_path.write_text(
        "[experiment]\n"
        f'name = "fig"\nseed = 3\nn_samples = 10\noutput_dir = "{tmp_path}"\n'
        "[target]\n"
        'name = "trajectory-bimodal"\n'
        "[trajectories]\n"
        "n_trajectories = 1\nt_total = 0.4\nepsilon = 0.02\nmarker_dt = 0.1\n"
    )
    assert main(["trajectories", str(cfg_path)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    assert all(os.path.exists(line) for line in lines)


def test_cli_trace(tmp_path, capsys):
    chain_path = tmp_path / "chain.csv"
    _record_with_samples(np.random.default_rng(0).standard_normal((30, 2))).to_csv(chain_path)
    assert main(["trace", str(chain_path)]) == 0
    out = capsys.readouterr().out.strip()
    assert out.endswith("chain-trace.svg") and os.path.exists(out)
    assert main(["trace", str(chain_path), "--coord", "9"]) == 2  # config error
    assert main(["trace", str(tmp_path / "nope.csv")]) == 1  # runtime error


def test_cli_bad_config_exit_code(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.toml")]) == 2
    assert "config error" in capsys.readouterr().err
