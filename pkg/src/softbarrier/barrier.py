"""Sampled and soft-minimum barrier functions over the predicted backup flow.

The sampled barrier is the minimum of the safety margin h_s along the predicted
flow samples plus the backup margin h_b at the horizon end.  The soft-minimum
barrier replaces that minimum with a softmin, which is continuously
differentiable; its gradient is assembled from the flow sensitivities as a
softmin-weighted sum of per-sample gradient rows.
"""

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .dynamics import ClosedLoopField, FlowTable, propagate_flow, propagate_states
from .smooth import softmin, softmin_weights

__all__ = [
    "SafetySpec",
    "BarrierConfig",
    "BarrierEval",
    "Box",
    "EstimationError",
    "flow_margins",
    "sampled_barrier",
    "softmin_barrier",
    "evaluate_barrier",
    "estimate_safety_lipschitz",
    "estimate_flow_speed_bound",
    "intersample_margin",
]


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SafetySpec:
    """Safe-set function h_s and its gradient.

    ``h_s`` maps states (..., n) to scalars (...); ``grad_hs`` to row vectors
    (..., n).  Both must broadcast over leading axes.
    """

    h_s: Callable[[np.ndarray], np.ndarray]
    grad_hs: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BarrierConfig:
    """Parameters of the barrier evaluation.

    rho: softmin sharpness; n_samples: number of prediction intervals N;
    t_sample: interval length; alpha: barrier-constraint gain; epsilon: gate
    threshold on h; kappa: blend-ramp width; substeps: RK4 steps per interval.
    """

    rho: float
    n_samples: int
    t_sample: float
    alpha: float
    epsilon: float
    kappa: float
    substeps: int = 5

    def __post_init__(self):
        if self.rho <= 0.0:
            raise ValueError("rho must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.t_sample <= 0.0:
            raise ValueError("t_sample must be positive")
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be nonnegative")
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @property
    def horizon(self):
        return self.n_samples * self.t_sample


@dataclass
class BarrierEval:
    """One barrier evaluation: values, gradient, Lie derivatives, and the flow."""

    h: float
    hbar_star: float
    grad_h: np.ndarray
    lf_h: float
    lg_h: np.ndarray
    flow: FlowTable = dc_field(repr=False, default=None)


def _states_of(flow_or_states):
    if isinstance(flow_or_states, FlowTable):
        return flow_or_states.states
    return np.asarray(flow_or_states, dtype=float)


def flow_margins(safety, backup, flow_or_states):
    """Margin stack over a flow: h_s at every sample, then h_b at the last one.

    ``flow_or_states`` is a FlowTable or an array (N+1, ..., n); the result has
    shape (N+2, ...).
    """
    states = _states_of(flow_or_states)
    zs = np.asarray(safety.h_s(states), dtype=float)
    zb = np.asarray(backup.h_b(states[-1]), dtype=float)
    return np.concatenate([zs, zb[None]], axis=0)


def sampled_barrier(safety, backup, flow_or_states):
    """min over { h_s(phi_i) for all samples } and { h_b at the horizon end }."""
    return flow_margins(safety, backup, flow_or_states).min(axis=0)


def softmin_barrier(safety, backup, flow_or_states, rho):
    """Soft minimum of the same margins as ``sampled_barrier``."""
    return softmin(rho, flow_margins(safety, backup, flow_or_states), axis=0)


def evaluate_barrier(system, backup, safety, cfg, x, field=None):
    """Evaluate the soft-minimum barrier, its gradient, and the Lie derivatives.

    The gradient is the softmin-weighted sum of the per-sample rows
    grad(phi_i) @ Q_i, with weights computed in shifted-exponential form so the
    normalization never overflows.  ``field`` may carry a prebuilt closed-loop
    field (for its fused fast path); it must match ``system`` and ``backup``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if field is None:
        field = ClosedLoopField(system, backup)
    flow = propagate_flow(field, x, cfg.n_samples, cfg.t_sample, cfg.substeps)
    z = flow_margins(safety, backup, flow)
    hbar = float(z.min())
    h = softmin(cfg.rho, z)
    w = softmin_weights(cfg.rho, z)
    rows_s = np.einsum(
        "ij,ijk->ik",
        np.asarray(safety.grad_hs(flow.states), dtype=float),
        flow.sensitivities,
    )
    row_b = np.asarray(backup.grad_hb(flow.states[-1]), dtype=float) @ flow.sensitivities[-1]
    grad_h = w @ np.vstack([rows_s, row_b])
    f0 = np.asarray(system.f(x), dtype=float)
    g0 = np.asarray(system.g(x), dtype=float)
    return BarrierEval(
        h=h,
        hbar_star=hbar,
        grad_h=grad_h,
        lf_h=float(grad_h @ f0),
        lg_h=grad_h @ g0,
        flow=flow,
    )


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, used as a sampling domain."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape:
            raise ValueError("box bounds must have matching shapes")
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise ValueError("box bounds must be finite")
        if np.any(self.hi < self.lo):
            raise ValueError("box upper bounds must not be below lower bounds")

    def sample(self, rng, count):
        return rng.uniform(self.lo, self.hi, size=(count, self.lo.size))


def estimate_safety_lipschitz(safety, box, samples, rng):
    """Sampled bound on the Lipschitz constant of h_s: the largest gradient
    2-norm over uniform samples in the box, inflated by 10 percent."""
    if samples < 1000:
        raise ValueError("Lipschitz estimation needs at least 1000 samples")
    pts = box.sample(rng, samples)
    norms = np.linalg.norm(np.asarray(safety.grad_hs(pts), dtype=float), axis=-1)
    return 1.1 * float(norms.max())


def estimate_flow_speed_bound(field, safety, cfg, box, samples, rng):
    """Sampled bound on the closed-loop speed over the sampled-barrier
    superlevel set: max ||f(x) + g(x) u_b(x)||_2 over in-set samples, inflated
    by 10 percent."""
    if samples < 1000:
        raise ValueError("speed-bound estimation needs at least 1000 samples")
    pts = box.sample(rng, samples)
    states = propagate_states(field, pts, cfg.n_samples, cfg.t_sample, cfg.substeps)
    hbar = sampled_barrier(safety, field.backup, states)
    mask = hbar >= 0.0
    if not np.any(mask):
        raise EstimationError("no sampled state lies in the predicted-safe set")
    speeds = np.linalg.norm(field.ftilde(pts[mask]), axis=-1)
    return 1.1 * float(speeds.max())


def intersample_margin(l_s, l_phi, t_sample):
    """Sampling-induced margin 0.5 * t_sample * l_phi * l_s."""
    if l_s < 0.0 or l_phi < 0.0 or t_sample < 0.0:
        raise ValueError("margin factors must be nonnegative")
    return 0.5 * t_sample * l_phi * l_s


def softmin_gap_bound(cfg):
    """Largest possible gap between the sampled and soft-minimum barriers."""
    return math.log(cfg.n_samples + 2) / cfg.rho
