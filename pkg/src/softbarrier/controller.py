"""Online safety filter and zero-order-hold closed-loop simulation.

Each control tick evaluates the soft-minimum barrier, a feasibility metric
(the best achievable value of the barrier constraint over the admissible
polytope), and a gate value.  A negative gate selects the backup control
outright; otherwise a minimum-intervention projection is solved and the output
is a ramp blend between the backup and the projected control, which makes the
overall law continuous in the state.
"""

import time
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .barrier import BarrierConfig, evaluate_barrier
from .dynamics import rk4_step
from .solvers import AffineHalfspace, ControlPolytope, InfeasibleError, max_linear, solve_qp

__all__ = [
    "MODE_BACKUP",
    "MODE_BLEND",
    "MODE_QP",
    "ControllerConfig",
    "ControllerOutput",
    "TrajectoryLog",
    "ControllerContractError",
    "SimulationDivergenceError",
    "blend_ramp",
    "gate",
    "feasibility_metric",
    "filter_control",
    "simulate",
]

MODE_BACKUP = "backup"
MODE_BLEND = "blend"
MODE_QP = "qp"

_PLANT_DIVERGENCE_LIMIT = 1e9


class ControllerContractError(RuntimeError):
    """The projection was infeasible although the gate admitted it; a bug signal."""


class SimulationDivergenceError(RuntimeError):
    def __init__(self, t, partial_log):
        self.t = t
        self.partial_log = partial_log
        super().__init__(f"plant state diverged at t = {t:.6g}; partial log retained")


@dataclass(frozen=True)
class ControllerConfig:
    barrier: BarrierConfig
    poly: ControlPolytope
    sigma_kind: str = "ramp"

    def __post_init__(self):
        if self.sigma_kind != "ramp":
            raise ValueError(f"unknown blend function kind: {self.sigma_kind!r}")


@dataclass
class ControllerOutput:
    """Per-tick filter result: the applied control plus its diagnostics."""

    u: np.ndarray
    h: float
    hbar_star: float
    beta: float
    gamma: float
    mode: str
    u_backup: np.ndarray
    u_star: Optional[np.ndarray] = None


@dataclass
class TrajectoryLog:
    """Closed-loop record at every control tick, plus a finer plant-substep grid.

    ``fine_t``/``fine_states`` hold the plant integration substep points (the
    between-tick diagnostic grid); ``metadata`` carries the run configuration
    snapshot and timing.
    """

    t: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    h: np.ndarray
    hbar_star: np.ndarray
    h_s: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    modes: list
    fine_t: np.ndarray
    fine_states: np.ndarray
    metadata: dict = dc_field(default_factory=dict)

    def __len__(self):
        return self.t.size


def blend_ramp(a, kappa):
    """Piecewise-linear ramp: 0 below zero, a/kappa on [0, kappa], 1 above."""
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    if a < 0.0:
        return 0.0
    if a > kappa:
        return 1.0
    return a / kappa


def gate(h, beta, epsilon):
    """Gate value min(h - epsilon, beta); negative forces the backup control."""
    return min(h - epsilon, beta)


def feasibility_metric(ev, alpha, epsilon, poly):
    """Best achievable constraint value over the polytope:
    Lf h + alpha*(h - epsilon) + max_u Lg h . u."""
    value, _ = max_linear(poly, ev.lg_h)
    return ev.lf_h + alpha * (ev.h - epsilon) + value


def filter_control(system, backup, safety, cfg, x, u_d, field=None):
    """One safety-filter evaluation at state x for desired control u_d.

    The desired control need not be admissible.  The projection is only formed
    when the gate is nonnegative, in which case it is guaranteed feasible.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    u_d = np.asarray(u_d, dtype=float).reshape(-1)
    bcfg = cfg.barrier
    ev = evaluate_barrier(system, backup, safety, bcfg, x, field=field)
    beta = feasibility_metric(ev, bcfg.alpha, bcfg.epsilon, cfg.poly)
    gam = gate(ev.h, beta, bcfg.epsilon)
    u_backup = np.asarray(backup.u_b(x), dtype=float).reshape(-1)
    if gam < 0.0:
        return ControllerOutput(
            u=u_backup.copy(),
            h=ev.h,
            hbar_star=ev.hbar_star,
            beta=beta,
            gamma=gam,
            mode=MODE_BACKUP,
            u_backup=u_backup,
        )
    halfspace = AffineHalfspace(ev.lg_h, ev.lf_h + bcfg.alpha * (ev.h - bcfg.epsilon))
    try:
        u_star = solve_qp(cfg.poly, halfspace, u_d)
    except InfeasibleError as exc:
        raise ControllerContractError(
            f"projection infeasible at a gated state (gamma = {gam:.3e})"
        ) from exc
    s = blend_ramp(gam, bcfg.kappa)
    u = (1.0 - s) * u_backup + s * u_star
    mode = MODE_QP if gam >= bcfg.kappa else MODE_BLEND
    return ControllerOutput(
        u=u,
        h=ev.h,
        hbar_star=ev.hbar_star,
        beta=beta,
        gamma=gam,
        mode=mode,
        u_backup=u_backup,
        u_star=u_star,
    )


def simulate(
    system,
    backup,
    safety,
    cfg,
    x0,
    u_d_source,
    duration,
    delta_t,
    plant_substeps=10,
    metadata=None,
    field=None,
):
    """Zero-order-hold closed-loop simulation.

    At each tick the filter computes the control, which is held constant while
    the plant advances with RK4 over ``plant_substeps`` steps; every substep
    endpoint is recorded on the fine diagnostic grid.  ``u_d_source`` maps
    (t, x) to the desired control.
    """
    if duration <= 0.0:
        raise ValueError("duration must be positive")
    if delta_t <= 0.0:
        raise ValueError("delta_t must be positive")
    if plant_substeps < 1:
        raise ValueError("plant_substeps must be >= 1")
    x = np.asarray(x0, dtype=float).reshape(-1)
    n = x.size
    m = cfg.poly.m
    n_ticks = int(round(duration / delta_t))
    rows = n_ticks + 1
    log = TrajectoryLog(
        t=np.empty(rows),
        states=np.empty((rows, n)),
        controls=np.empty((rows, m)),
        h=np.empty(rows),
        hbar_star=np.empty(rows),
        h_s=np.empty(rows),
        beta=np.empty(rows),
        gamma=np.empty(rows),
        modes=[],
        fine_t=np.empty(n_ticks * plant_substeps),
        fine_states=np.empty((n_ticks * plant_substeps, n)),
        metadata=dict(metadata or {}),
    )
    started = time.perf_counter()
    dt_sub = delta_t / plant_substeps
    for k in range(rows):
        t = k * delta_t
        out = filter_control(system, backup, safety, cfg, x, u_d_source(t, x), field=field)
        log.t[k] = t
        log.states[k] = x
        log.controls[k] = out.u
        log.h[k] = out.h
        log.hbar_star[k] = out.hbar_star
        log.h_s[k] = float(safety.h_s(x))
        log.beta[k] = out.beta
        log.gamma[k] = out.gamma
        log.modes.append(out.mode)
        if k == n_ticks:
            break
        u_held = out.u
        plant = lambda s: np.asarray(system.f(s), dtype=float) + np.asarray(
            system.g(s), dtype=float
        ) @ u_held
        for j in range(plant_substeps):
            x = rk4_step(plant, x, dt_sub)
            idx = k * plant_substeps + j
            log.fine_t[idx] = t + (j + 1) * dt_sub
            log.fine_states[idx] = x
        if not np.all(np.isfinite(x)) or float(np.abs(x).max()) > _PLANT_DIVERGENCE_LIMIT:
            _truncate_log(log, k + 1, plant_substeps)
            raise SimulationDivergenceError(t + delta_t, log)
    log.metadata["wall_time_s"] = time.perf_counter() - started
    return log


def _truncate_log(log, rows_done, plant_substeps):
    log.t = log.t[:rows_done]
    log.states = log.states[:rows_done]
    log.controls = log.controls[:rows_done]
    log.h = log.h[:rows_done]
    log.hbar_star = log.hbar_star[:rows_done]
    log.h_s = log.h_s[:rows_done]
    log.beta = log.beta[:rows_done]
    log.gamma = log.gamma[:rows_done]
    log.modes = log.modes[:rows_done]
    fine_rows = rows_done * plant_substeps
    log.fine_t = log.fine_t[:fine_rows]
    log.fine_states = log.fine_states[:fine_rows]
