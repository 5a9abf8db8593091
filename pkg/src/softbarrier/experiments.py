"""Experiment configuration, closed-loop run orchestration, and CSV persistence.

Configs are human-editable YAML; unknown keys are rejected.  Each run produces
one trajectory CSV (fixed column schema, floats at 17 significant digits so
re-parsing is bit-exact) and the sweep produces a key-value summary file.
"""

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .barrier import (
    estimate_flow_speed_bound,
    estimate_safety_lipschitz,
    flow_margins,
    intersample_margin,
)
from .controller import ControllerConfig, SimulationDivergenceError, simulate
from .dynamics import ClosedLoopField, propagate_states
from .smooth import softmin
from .systems import CircleObstacle, RobotMap, build_pendulum, build_robot, check_invariance

__all__ = [
    "ConfigError",
    "ExperimentResult",
    "RunResult",
    "load_config",
    "validate_config",
    "build_bundle",
    "resolve_epsilon",
    "run_experiment",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_grid_csv",
    "write_summary",
    "TRAJECTORY_COLUMNS",
]

FLOAT_FMT = "%.17g"
MODES = ("backup", "blend", "qp")


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "model": None,
    "seed": None,
    "duration": None,
    "delta_t": None,
    "plant_substeps": None,
    "barrier": {"rho", "samples", "sample_time", "alpha", "kappa", "substeps"},
    "runs": {"x0", "epsilon", "goal"},
    "lipschitz": {"samples"},
    "invariance": {"samples", "horizon"},
    "grid": {"shape", "lo", "hi", "base"},
    "map": {
        "x_min",
        "x_max",
        "y_min",
        "y_max",
        "v_max",
        "v_scale",
        "sharpness",
        "circles",
    },
}

_REQUIRED = ("model", "seed", "duration", "runs")


def validate_config(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a mapping")
    for key in cfg:
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key: {key!r}")
    for key in _REQUIRED:
        if key not in cfg:
            raise ConfigError(f"missing required config key: {key!r}")
    if cfg["model"] not in ("pendulum", "robot"):
        raise ConfigError(f"unknown model: {cfg['model']!r}")
    for section in ("barrier", "lipschitz", "invariance", "grid", "map"):
        if section in cfg:
            if not isinstance(cfg[section], dict):
                raise ConfigError(f"config section {section!r} must be a mapping")
            for key in cfg[section]:
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown config key: {section}.{key!r}")
    if not isinstance(cfg["runs"], list) or not cfg["runs"]:
        raise ConfigError("config must list at least one run")
    for i, run in enumerate(cfg["runs"]):
        if not isinstance(run, dict):
            raise ConfigError(f"runs[{i}] must be a mapping")
        for key in run:
            if key not in _SCHEMA["runs"]:
                raise ConfigError(f"unknown config key: runs[{i}].{key!r}")
        if "x0" not in run:
            raise ConfigError(f"runs[{i}] is missing x0")
        eps = run.get("epsilon")
        if eps is not None and eps != "threshold" and not isinstance(eps, (int, float)):
            raise ConfigError(f"runs[{i}].epsilon must be a number or 'threshold'")
        if cfg["model"] == "robot" and "goal" not in run:
            raise ConfigError(f"runs[{i}] is missing goal (robot runs track a goal)")
    if "map" in cfg and cfg["model"] != "robot":
        raise ConfigError("map section is only valid for the robot model")
    return cfg


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    return validate_config(cfg)


def _map_from_config(section):
    kwargs = dict(section)
    circles = tuple(
        CircleObstacle(center=c["center"], radius=c["radius"])
        for c in kwargs.pop("circles", [])
    )
    return RobotMap(circles=circles, **kwargs)


def build_bundle(cfg):
    if cfg["model"] == "pendulum":
        bundle = build_pendulum()
    else:
        robot_map = _map_from_config(cfg["map"]) if "map" in cfg else None
        bundle = build_robot(robot_map=robot_map)
    overrides = cfg.get("barrier", {})
    rename = {"samples": "n_samples", "sample_time": "t_sample"}
    fields = {rename.get(k, k): v for k, v in overrides.items()}
    if fields:
        bundle.barrier_cfg = dataclasses.replace(bundle.barrier_cfg, **fields)
    return bundle


def resolve_epsilon(cfg, bundle, seed):
    """Compute the sampling-induced margin once if any run requests it."""
    needs = any(run.get("epsilon") == "threshold" for run in cfg["runs"])
    if not needs:
        return None
    samples = int(cfg.get("lipschitz", {}).get("samples", 4000))
    l_s = estimate_safety_lipschitz(
        bundle.safety, bundle.domain_box, samples, np.random.default_rng([seed, 0])
    )
    field = ClosedLoopField(bundle.system, bundle.backup)
    l_phi = estimate_flow_speed_bound(
        field,
        bundle.safety,
        bundle.barrier_cfg,
        bundle.domain_box,
        samples,
        np.random.default_rng([seed, 1]),
    )
    return {
        "l_s": l_s,
        "l_phi": l_phi,
        "epsilon": intersample_margin(l_s, l_phi, bundle.barrier_cfg.t_sample),
    }


def _run_epsilon(run, bundle, threshold_info):
    eps = run.get("epsilon")
    if eps is None:
        return bundle.barrier_cfg.epsilon
    if eps == "threshold":
        return threshold_info["epsilon"]
    return float(eps)


def estimate_barrier_supremum(bundle, seed, samples=2000):
    """Sampled supremum of the soft-minimum barrier over the domain box."""
    cfg = bundle.barrier_cfg
    pts = bundle.domain_box.sample(np.random.default_rng([seed, 3]), samples)
    states = propagate_states(bundle.field, pts, cfg.n_samples, cfg.t_sample, cfg.substeps)
    z = flow_margins(bundle.safety, bundle.backup, states)
    return float(softmin(cfg.rho, z, axis=0).max())


def _epsilon_headroom_warnings(bundle, epsilons, seed):
    """Gate thresholds at or above the barrier's reachable supremum leave no
    gated region; such runs fall back to the backup control throughout.  That
    is legitimate (and what the sampling-induced margin produces on the
    pendulum), so it is reported, not rejected."""
    sup_h = estimate_barrier_supremum(bundle, seed)
    warnings = []
    for eps in sorted(set(epsilons)):
        if eps >= sup_h:
            warnings.append(
                f"epsilon {eps:.6g} >= sampled sup h {sup_h:.6g}: "
                "gate never opens; runs are backup-only"
            )
    return sup_h, warnings


@dataclass
class RunResult:
    index: int
    epsilon: float
    log: object
    metrics: dict
    csv_path: Optional[Path] = None


@dataclass
class ExperimentResult:
    config: dict
    out_dir: Optional[Path]
    seed: int
    threshold_info: Optional[dict]
    runs: list = dc_field(default_factory=list)
    sup_h: Optional[float] = None
    warnings: list = dc_field(default_factory=list)


def _execute_run(cfg, index, epsilon, seed):
    bundle = build_bundle(cfg)
    run = cfg["runs"][index]
    bcfg = dataclasses.replace(bundle.barrier_cfg, epsilon=epsilon)
    ctrl = ControllerConfig(barrier=bcfg, poly=bundle.poly)
    goal = run.get("goal")
    u_d = bundle.desired_control(goal)
    x0 = np.asarray(run["x0"], dtype=float)
    delta_t = float(cfg.get("delta_t", bundle.delta_t))
    meta = {
        "model": cfg["model"],
        "run_index": index,
        "seed": seed,
        "epsilon": epsilon,
        "delta_t": delta_t,
        "duration": float(cfg["duration"]),
        "plant_substeps": int(cfg.get("plant_substeps", 10)),
        "barrier": dataclasses.asdict(bcfg),
        "x0": list(map(float, x0)),
    }
    if goal is not None:
        meta["goal"] = list(map(float, goal))
    diverged = None
    try:
        log = simulate(
            bundle.system,
            bundle.backup,
            bundle.safety,
            ctrl,
            x0,
            u_d,
            duration=float(cfg["duration"]),
            delta_t=delta_t,
            plant_substeps=int(cfg.get("plant_substeps", 10)),
            metadata=meta,
            field=bundle.field,
        )
    except SimulationDivergenceError as exc:
        log = exc.partial_log
        diverged = exc.t
    metrics = _run_metrics(bundle, run, log, epsilon)
    if diverged is not None:
        metrics["diverged_at"] = diverged
    return log, metrics


def _run_metrics(bundle, run, log, epsilon):
    poly = bundle.poly
    violations = log.controls @ poly.A.T - poly.b
    metrics = {
        "epsilon": epsilon,
        "min_h": float(log.h.min()),
        "min_hbar_star": float(log.hbar_star.min()),
        "min_h_s": float(log.h_s.min()),
        "min_beta": float(log.beta.min()),
        "max_constraint_violation": float(violations.max()),
        "wall_time_s": float(log.metadata.get("wall_time_s", 0.0)),
        "modes": ",".join(sorted(set(log.modes))),
    }
    goal = run.get("goal")
    if goal is not None:
        goal = np.asarray(goal, dtype=float)
        half = goal.size // 2
        metrics["final_goal_distance"] = float(
            np.linalg.norm(log.states[-1][:half] - goal[:half])
        )
    return metrics


def _worker(args):
    cfg, index, epsilon, seed = args
    log, metrics = _execute_run(cfg, index, epsilon, seed)
    return index, log, metrics


def run_experiment(
    cfg,
    out_dir=None,
    seed=None,
    run_indices=None,
    jobs=1,
    quiet=False,
    write_grid=False,
):
    """Run the configured closed-loop simulations and persist their logs.

    Returns an ExperimentResult holding every TrajectoryLog and its metrics.
    With ``jobs > 1`` the runs execute in separate processes; outputs are
    identical either way because every run is self-contained and the
    sampling-induced margin is resolved once up front.
    """
    validate_config(cfg)
    seed = int(cfg["seed"] if seed is None else seed)
    bundle = build_bundle(cfg)
    threshold_info = resolve_epsilon(cfg, bundle, seed)
    indices = list(run_indices) if run_indices is not None else list(range(len(cfg["runs"])))
    tasks = [
        (cfg, i, _run_epsilon(cfg["runs"][i], bundle, threshold_info), seed)
        for i in indices
    ]
    sup_h, headroom_warnings = _epsilon_headroom_warnings(
        bundle, [task[2] for task in tasks], seed
    )
    result = ExperimentResult(
        config=cfg,
        out_dir=Path(out_dir) if out_dir is not None else None,
        seed=seed,
        threshold_info=threshold_info,
        sup_h=sup_h,
        warnings=headroom_warnings,
    )
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_worker, tasks))
    else:
        outputs = [_worker(task) for task in tasks]
    for index, log, metrics in outputs:
        result.runs.append(
            RunResult(
                index=index,
                epsilon=metrics["epsilon"],
                log=log,
                metrics=metrics,
            )
        )
    if result.out_dir is not None:
        result.out_dir.mkdir(parents=True, exist_ok=True)
        for rr in result.runs:
            rr.csv_path = result.out_dir / f"run_{rr.index:02d}.csv"
            write_trajectory_csv(rr.csv_path, rr.log)
        write_summary(result.out_dir / "summary.txt", result)
        if write_grid:
            if "grid" not in cfg:
                raise ConfigError("grid output requested but config has no grid section")
            write_grid_csv(result.out_dir / "grid.csv", bundle, cfg["grid"])
    if not quiet:
        for warning in result.warnings:
            print(f"note: {warning}")
        for rr in result.runs:
            flags = " DIVERGED" if "diverged_at" in rr.metrics else ""
            print(
                f"run {rr.index:02d}: eps={rr.epsilon:.6g} "
                f"min_h_s={rr.metrics['min_h_s']:.6g} "
                f"min_hbar_star={rr.metrics['min_hbar_star']:.6g}{flags}"
            )
    return result


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def TRAJECTORY_COLUMNS(n, m):
    return (
        ["t"]
        + [f"x{i}" for i in range(n)]
        + [f"u{j}" for j in range(m)]
        + ["h", "hbar_star", "h_s", "beta", "gamma", "mode"]
    )


def write_trajectory_csv(path, log):
    n = log.states.shape[1]
    m = log.controls.shape[1]
    cols = TRAJECTORY_COLUMNS(n, m)
    lines = [",".join(cols)]
    for k in range(len(log)):
        fields = (
            [FLOAT_FMT % log.t[k]]
            + [FLOAT_FMT % v for v in log.states[k]]
            + [FLOAT_FMT % v for v in log.controls[k]]
            + [
                FLOAT_FMT % log.h[k],
                FLOAT_FMT % log.hbar_star[k],
                FLOAT_FMT % log.h_s[k],
                FLOAT_FMT % log.beta[k],
                FLOAT_FMT % log.gamma[k],
                log.modes[k],
            ]
        )
        lines.append(",".join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trajectory_csv(path):
    """Parse a trajectory CSV back into arrays, validating the column schema."""
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = text[0].split(",")
    state_cols = [c for c in header if c.startswith("x") and c[1:].isdigit()]
    control_cols = [c for c in header if c.startswith("u") and c[1:].isdigit()]
    expected = TRAJECTORY_COLUMNS(len(state_cols), len(control_cols))
    if header != expected:
        unexpected = [c for c in header if c not in expected] or [
            c for c in expected if c not in header
        ]
        raise ConfigError(f"trajectory CSV schema mismatch at column {unexpected[0]!r}")
    rows = [line.split(",") for line in text[1:]]
    data = np.array([[float(v) for v in row[:-1]] for row in rows])
    n, m = len(state_cols), len(control_cols)
    return {
        "t": data[:, 0],
        "states": data[:, 1 : 1 + n],
        "controls": data[:, 1 + n : 1 + n + m],
        "h": data[:, 1 + n + m],
        "hbar_star": data[:, 2 + n + m],
        "h_s": data[:, 3 + n + m],
        "beta": data[:, 4 + n + m],
        "gamma": data[:, 5 + n + m],
        "modes": [row[-1] for row in rows],
    }


def write_summary(path, result):
    lines = [
        f"model = {result.config['model']}",
        f"seed = {result.seed}",
        f"runs = {len(result.runs)}",
    ]
    if result.sup_h is not None:
        lines.append(f"sampled_sup_h = {FLOAT_FMT % result.sup_h}")
    for i, warning in enumerate(result.warnings):
        lines.append(f"warning_{i} = {warning}")
    if result.threshold_info is not None:
        for key in ("l_s", "l_phi", "epsilon"):
            lines.append(
                f"threshold.{key} = {FLOAT_FMT % result.threshold_info[key]}"
            )
    for rr in result.runs:
        prefix = f"run_{rr.index:02d}"
        for key, value in sorted(rr.metrics.items()):
            if isinstance(value, float):
                lines.append(f"{prefix}.{key} = {FLOAT_FMT % value}")
            else:
                lines.append(f"{prefix}.{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


GRID_COLUMNS = ["x0", "x1", "h", "hbar_star", "h_s", "h_b"]


def write_grid_csv(path, bundle, grid_cfg):
    """Evaluate the barrier family over a plane of states and dump it as CSV.

    The grid sweeps the first two state coordinates; remaining coordinates are
    held at the ``base`` template.  Columns: x0, x1, h, hbar_star, h_s, h_b.
    """
    shape = [int(s) for s in grid_cfg["shape"]]
    lo = [float(v) for v in grid_cfg["lo"]]
    hi = [float(v) for v in grid_cfg["hi"]]
    if len(shape) != 2 or len(lo) != 2 or len(hi) != 2:
        raise ConfigError("grid shape, lo, and hi must each have two entries")
    n = bundle.system.n
    base = np.asarray(grid_cfg.get("base", [0.0] * n), dtype=float)
    if base.size != n:
        raise ConfigError(f"grid base must have {n} entries")
    ax0 = np.linspace(lo[0], hi[0], shape[0])
    ax1 = np.linspace(lo[1], hi[1], shape[1])
    g0, g1 = np.meshgrid(ax0, ax1, indexing="ij")
    pts = np.tile(base, (g0.size, 1))
    pts[:, 0] = g0.ravel()
    pts[:, 1] = g1.ravel()
    cfg = bundle.barrier_cfg
    field = ClosedLoopField(bundle.system, bundle.backup)
    states = propagate_states(field, pts, cfg.n_samples, cfg.t_sample, cfg.substeps)
    z = flow_margins(bundle.safety, bundle.backup, states)
    hbar = z.min(axis=0)
    h = softmin(cfg.rho, z, axis=0)
    h_s = np.asarray(bundle.safety.h_s(pts), dtype=float)
    h_b = np.asarray(bundle.backup.h_b(pts), dtype=float)
    lines = [",".join(GRID_COLUMNS)]
    for i in range(pts.shape[0]):
        lines.append(
            ",".join(
                FLOAT_FMT % v
                for v in (pts[i, 0], pts[i, 1], h[i], hbar[i], h_s[i], h_b[i])
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_invariance_check(cfg, seed=None):
    bundle = build_bundle(cfg)
    section = cfg.get("invariance", {})
    rng = np.random.default_rng([int(cfg["seed"] if seed is None else seed), 2])
    return check_invariance(
        bundle,
        samples=int(section.get("samples", 500)),
        horizon=section.get("horizon"),
        rng=rng,
    )


def run_lipschitz_estimate(cfg, seed=None):
    bundle = build_bundle(cfg)
    seed = int(cfg["seed"] if seed is None else seed)
    samples = int(cfg.get("lipschitz", {}).get("samples", 4000))
    l_s = estimate_safety_lipschitz(
        bundle.safety, bundle.domain_box, samples, np.random.default_rng([seed, 0])
    )
    field = ClosedLoopField(bundle.system, bundle.backup)
    l_phi = estimate_flow_speed_bound(
        field,
        bundle.safety,
        bundle.barrier_cfg,
        bundle.domain_box,
        samples,
        np.random.default_rng([seed, 1]),
    )
    return {
        "l_s": l_s,
        "l_phi": l_phi,
        "epsilon": intersample_margin(l_s, l_phi, bundle.barrier_cfg.t_sample),
    }
