"""Benchmark plants: an inverted pendulum with torque saturation and a
double-integrator planar robot in an obstacle map.

Both bundles carry analytic Jacobians for the prediction loop, the admissible
control box, barrier defaults, and sampling domains used by estimators and
invariance checks.
"""

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .barrier import BarrierConfig, Box, SafetySpec
from .dynamics import BackupPolicy, ClosedLoopField, SystemModel, propagate_states
from .smooth import pnorm, pnorm_grad, smooth_sat, smooth_sat_slope, softmin, softmin_weights
from .solvers import ControlPolytope

__all__ = [
    "ModelBundle",
    "CircleObstacle",
    "RobotMap",
    "DEFAULT_ROBOT_MAP",
    "SynthesisError",
    "InvarianceReport",
    "build_pendulum",
    "build_robot",
    "solve_lyapunov",
    "synthesize_robot_Pb",
    "check_invariance",
]


class SynthesisError(RuntimeError):
    pass


def _sat_pair(limit, pre):
    """Scalar smooth_sat value and slope, shared by the fused fast paths.

    Must agree with smooth.smooth_sat / smooth_sat_slope (covered by tests).
    """
    r = abs(pre) / limit
    if r <= 1.0:
        base = (1.0 + r**8) ** 0.125
        return pre / base, base**-9
    inv = (1.0 / r) ** 8
    base = (1.0 + inv) ** 0.125
    return math.copysign(limit, pre) / base, r**-9 * base**-9


@dataclass
class ModelBundle:
    """Everything needed to run one benchmark model."""

    name: str
    system: SystemModel
    backup: BackupPolicy
    safety: SafetySpec
    barrier_cfg: BarrierConfig
    poly: ControlPolytope
    delta_t: float
    domain_box: Box
    backup_box: Box
    desired_control: Callable[[Optional[np.ndarray]], Callable]
    rate_jac: Optional[Callable] = None
    aux: dict = dc_field(default_factory=dict)

    @property
    def field(self):
        """Closed-loop backup field, carrying the fused fast path if present."""
        return ClosedLoopField(self.system, self.backup, rate_jac=self.rate_jac)


def _quadratic_bounding_box(P, level, center):
    """Tight axis-aligned box around the ellipsoid (x-c)^T P (x-c) <= level."""
    extents = np.sqrt(level * np.diag(np.linalg.inv(P)))
    return Box(lo=center - extents, hi=center + extents)


# ---------------------------------------------------------------------------
# Inverted pendulum
# ---------------------------------------------------------------------------

def build_pendulum():
    """Inverted pendulum: state (angle from upright, rate), torque input.

    Drift [rate, sin(angle)], unit input channel on the rate, torque box
    [-1.5, 1.5].  The safe set keeps the state inside a 100-norm ball of radius
    pi; the backup control is a saturated linear law whose quadratic level set
    is the backup safe set.
    """
    u_max = 1.5
    gains = np.array([-3.0, -3.0])
    p_b = np.array([[1.25, 0.25], [0.25, 0.25]])
    c_b = 0.07
    norm_p = 100.0

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.stack([x[..., 1], np.sin(x[..., 0])], axis=-1)

    def g(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 1))
        out[..., 1, 0] = 1.0
        return out

    def jac_f(x):
        return np.array([[0.0, 1.0], [np.cos(x[0]), 0.0]])

    def jac_g(x):
        return np.zeros((1, 2, 2))

    def u_b(x):
        x = np.asarray(x, dtype=float)
        return smooth_sat(u_max, x @ gains)[..., None]

    def jac_ub(x):
        return (smooth_sat_slope(u_max, x @ gains) * gains)[None, :]

    def h_b(x):
        x = np.asarray(x, dtype=float)
        return c_b - np.einsum("...i,ij,...j->...", x, p_b, x)

    def grad_hb(x):
        return -2.0 * np.asarray(x, dtype=float) @ p_b

    def h_s(x):
        return np.pi - pnorm(norm_p, x)

    def grad_hs(x):
        return -pnorm_grad(norm_p, x)

    system = SystemModel(n=2, m=1, f=f, g=g, jac_f=jac_f, jac_g=jac_g)
    backup = BackupPolicy(u_b=u_b, h_b=h_b, grad_hb=grad_hb, jac_ub=jac_ub)
    safety = SafetySpec(h_s=h_s, grad_hs=grad_hs)
    cfg = BarrierConfig(
        rho=100.0, n_samples=50, t_sample=0.1, alpha=1.0, epsilon=0.0, kappa=0.05
    )

    k0, k1 = gains

    def rate_jac(x):
        # fused closed-loop rate and Jacobian; shares the trig/saturation work
        th = x[0]
        om = x[1]
        pre = k0 * th + k1 * om
        u, slope = _sat_pair(u_max, pre)
        return (
            np.array([om, math.sin(th) + u]),
            np.array([[0.0, 1.0], [math.cos(th) + slope * k0, slope * k1]]),
        )

    def desired_control(goal=None):
        return lambda t, x: np.zeros(1)

    return ModelBundle(
        name="pendulum",
        system=system,
        backup=backup,
        safety=safety,
        barrier_cfg=cfg,
        poly=ControlPolytope.from_box([-u_max], [u_max]),
        delta_t=0.1,
        domain_box=Box(lo=[-np.pi, -np.pi], hi=[np.pi, np.pi]),
        backup_box=_quadratic_bounding_box(p_b, c_b, np.zeros(2)),
        desired_control=desired_control,
        rate_jac=rate_jac,
        aux={"P_b": p_b, "c_b": c_b, "gains": gains, "u_max": u_max},
    )


# ---------------------------------------------------------------------------
# Double-integrator robot
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CircleObstacle:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.radius <= 0.0:
            raise ValueError("obstacle radius must be positive")


@dataclass(frozen=True)
class RobotMap:
    """Planar workspace: rectangular walls, circular obstacles, a speed cap.

    The safe-set function is the softmin (sharpness ``sharpness``) of the four
    wall clearances, one normalized clearance per circle, and a scaled speed
    margin, so it is continuously differentiable everywhere.
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    circles: tuple
    v_max: float = 1.0
    v_scale: float = 0.5
    sharpness: float = 20.0

    def margin_stack(self, x):
        """All clearance terms at states x (..., 4), stacked on a new first axis."""
        x = np.asarray(x, dtype=float)
        qx, qy = x[..., 0], x[..., 1]
        terms = [
            self.x_max - qx,
            qx - self.x_min,
            self.y_max - qy,
            qy - self.y_min,
        ]
        for circ in self.circles:
            d2 = (qx - circ.center[0]) ** 2 + (qy - circ.center[1]) ** 2
            terms.append((d2 - circ.radius**2) / (2.0 * circ.radius))
        speed2 = x[..., 2] ** 2 + x[..., 3] ** 2
        terms.append(self.v_scale * (self.v_max**2 - speed2))
        return np.stack(terms, axis=0)

    def margin_gradients(self, x):
        """Gradients of every clearance term, shape (k, ..., 4)."""
        x = np.asarray(x, dtype=float)
        base = x.shape[:-1]
        k = 4 + len(self.circles) + 1
        grads = np.zeros((k,) + base + (4,))
        grads[0, ..., 0] = -1.0
        grads[1, ..., 0] = 1.0
        grads[2, ..., 1] = -1.0
        grads[3, ..., 1] = 1.0
        for j, circ in enumerate(self.circles):
            grads[4 + j, ..., 0] = (x[..., 0] - circ.center[0]) / circ.radius
            grads[4 + j, ..., 1] = (x[..., 1] - circ.center[1]) / circ.radius
        grads[-1, ..., 2] = -2.0 * self.v_scale * x[..., 2]
        grads[-1, ..., 3] = -2.0 * self.v_scale * x[..., 3]
        return grads

    def safety_spec(self):
        def h_s(x):
            return softmin(self.sharpness, self.margin_stack(x), axis=0)

        def grad_hs(x):
            z = self.margin_stack(x)
            w = softmin_weights(self.sharpness, z, axis=0)
            return np.einsum("k...,k...i->...i", w, self.margin_gradients(x))

        return SafetySpec(h_s=h_s, grad_hs=grad_hs)


DEFAULT_ROBOT_MAP = RobotMap(
    x_min=-1.2,
    x_max=1.0,
    y_min=-1.4,
    y_max=0.8,
    circles=(
        CircleObstacle(center=(-0.05, 0.25), radius=0.15),
        CircleObstacle(center=(0.2, -1.05), radius=0.15),
    ),
)


def solve_lyapunov(A):
    """Solve A^T P + P A = -I by vectorization and a dense linear solve."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("closed-loop matrix must be square")
    eigs = np.linalg.eigvals(A)
    if np.any(eigs.real >= 0.0):
        raise SynthesisError("closed-loop matrix is not Hurwitz")
    M = np.kron(np.eye(n), A.T) + np.kron(A.T, np.eye(n))
    P = np.linalg.solve(M, -np.eye(n).reshape(-1)).reshape(n, n)
    P = 0.5 * (P + P.T)
    if np.any(np.linalg.eigvalsh(P) <= 0.0):
        raise SynthesisError("Lyapunov solution is not positive definite")
    return P


@dataclass
class InvarianceReport:
    passed: bool
    min_margin: float
    samples: int
    horizon: float
    worst_start: Optional[np.ndarray] = None
    level_used: Optional[float] = None
    level_requested: Optional[float] = None

    @property
    def substituted(self):
        return (
            self.level_used is not None
            and self.level_requested is not None
            and self.level_used < self.level_requested
        )


def _sample_backup_set(backup, box, count, rng, max_batches=200):
    """Rejection-sample states with h_b >= 0 inside the box."""
    keep = []
    total = 0
    for _ in range(max_batches):
        pts = box.sample(rng, max(count, 256))
        mask = np.asarray(backup.h_b(pts), dtype=float) >= 0.0
        keep.append(pts[mask])
        total += int(mask.sum())
        if total >= count:
            break
    if total == 0:
        raise SynthesisError("no sample landed in the backup safe set")
    return np.concatenate(keep, axis=0)[:count]


def check_invariance(bundle, samples=500, horizon=None, rng=None, step=0.01):
    """Numerical forward-invariance check of the backup safe set.

    Samples starts with h_b >= 0, integrates the backup closed loop over the
    horizon, and reports the minimum of h_b along all trajectories; PASS means
    the minimum stays above -1e-6.
    """
    if samples < 100:
        raise ValueError("invariance check needs at least 100 samples")
    rng = rng or np.random.default_rng(0)
    horizon = float(horizon if horizon is not None else bundle.barrier_cfg.horizon)
    starts = _sample_backup_set(bundle.backup, bundle.backup_box, samples, rng)
    field = ClosedLoopField(bundle.system, bundle.backup)
    n_steps = max(1, int(round(horizon / step)))
    traj = propagate_states(field, starts, n_steps, horizon / n_steps, substeps=1)
    margins = np.asarray(bundle.backup.h_b(traj), dtype=float)
    worst = np.unravel_index(np.argmin(margins), margins.shape)
    return InvarianceReport(
        passed=bool(margins.min() >= -1e-6),
        min_margin=float(margins.min()),
        samples=samples,
        horizon=horizon,
        worst_start=starts[worst[1]].copy(),
    )


def synthesize_robot_Pb(closed_loop_A, c_b=0.0034, samples=400, rng=None):
    """Quadratic backup certificate for the robot's saturated backup law.

    Solves the Lyapunov equation for the unsaturated closed loop, then checks
    by sampled simulation that the requested sublevel set is forward invariant
    under the saturated control.  If the check fails the level is shrunk by
    bisection and the substitution is reported.
    """
    rng = rng or np.random.default_rng(7)
    P = solve_lyapunov(closed_loop_A)
    requested = float(c_b)

    def sat_level_invariant(level):
        report = _robot_level_check(P, level, samples, rng)
        return report

    report = sat_level_invariant(requested)
    level = requested
    if not report.passed:
        lo, hi = 0.0, requested
        for _ in range(10):
            mid = 0.5 * (lo + hi)
            if sat_level_invariant(mid).passed:
                lo = mid
            else:
                hi = mid
        level = lo
        report = sat_level_invariant(level) if level > 0.0 else report
    report.level_used = level
    report.level_requested = requested
    return P, report


def _robot_backup_policy(P, c_b, x_b, gains_1, gains_2, u_max):
    def u_b(x):
        dx = np.asarray(x, dtype=float) - x_b
        return np.stack(
            [smooth_sat(u_max, dx @ gains_1), smooth_sat(u_max, dx @ gains_2)], axis=-1
        )

    def jac_ub(x):
        dx = np.asarray(x, dtype=float) - x_b
        return np.stack(
            [
                smooth_sat_slope(u_max, dx @ gains_1) * gains_1,
                smooth_sat_slope(u_max, dx @ gains_2) * gains_2,
            ],
            axis=0,
        )

    def h_b(x):
        dx = np.asarray(x, dtype=float) - x_b
        return 1.0 - np.einsum("...i,ij,...j->...", dx, P, dx) / c_b

    def grad_hb(x):
        dx = np.asarray(x, dtype=float) - x_b
        return -2.0 * (dx @ P) / c_b

    return BackupPolicy(u_b=u_b, h_b=h_b, grad_hb=grad_hb, jac_ub=jac_ub)


def _robot_level_check(P, level, samples, rng, horizon=4.0, step=0.005):
    if level <= 0.0:
        return InvarianceReport(passed=True, min_margin=0.0, samples=0, horizon=horizon)
    x_b = np.zeros(4)
    gains_1 = np.array([-3.16, 0.0, -4.04, 0.0])
    gains_2 = np.array([0.0, -3.16, 0.0, -4.04])
    backup = _robot_backup_policy(P, level, x_b, gains_1, gains_2, 1.0)
    system = _robot_system()
    box = _quadratic_bounding_box(P, level, x_b)
    starts = _sample_backup_set(backup, box, samples, rng)
    field = ClosedLoopField(system, backup)
    n_steps = int(round(horizon / step))
    traj = propagate_states(field, starts, n_steps, horizon / n_steps, substeps=1)
    quad = (1.0 - np.asarray(backup.h_b(traj), dtype=float)) * level
    return InvarianceReport(
        passed=bool(quad.max() <= level + 1e-9),
        min_margin=float(level - quad.max()),
        samples=samples,
        horizon=horizon,
    )


def _robot_system():
    def f(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0] = x[..., 2]
        out[..., 1] = x[..., 3]
        return out

    def g(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (4, 2))
        out[..., 2, 0] = 1.0
        out[..., 3, 1] = 1.0
        return out

    def jac_f(x):
        J = np.zeros((4, 4))
        J[0, 2] = 1.0
        J[1, 3] = 1.0
        return J

    def jac_g(x):
        return np.zeros((2, 4, 4))

    return SystemModel(n=4, m=2, f=f, g=g, jac_f=jac_f, jac_g=jac_g)


def build_robot(robot_map=None, c_b=0.0034):
    """Double-integrator robot: positions and velocities in the plane,
    per-axis acceleration box [-1, 1].

    The backup control is a per-axis saturated linear law toward a fixed rest
    point; its certificate is synthesized from the unsaturated closed loop and
    validated against the saturated dynamics.  The backup safe-set function is
    the certificate level set normalized to peak at one, so its scale is
    commensurate with the workspace clearances entering the soft minimum.
    """
    robot_map = robot_map or DEFAULT_ROBOT_MAP
    u_max = 1.0
    gains_1 = np.array([-3.16, 0.0, -4.04, 0.0])
    gains_2 = np.array([0.0, -3.16, 0.0, -4.04])
    x_b = np.array([-0.1, -0.3, 0.0, 0.0])
    A_cl = np.zeros((4, 4))
    A_cl[0, 2] = 1.0
    A_cl[1, 3] = 1.0
    A_cl[2] = gains_1
    A_cl[3] = gains_2
    P, lyap_report = synthesize_robot_Pb(A_cl, c_b=c_b)
    level = lyap_report.level_used

    system = _robot_system()
    backup = _robot_backup_policy(P, level, x_b, gains_1, gains_2, u_max)
    safety = robot_map.safety_spec()
    cfg = BarrierConfig(
        rho=100.0, n_samples=30, t_sample=0.1, alpha=1.0, epsilon=0.1, kappa=0.1
    )

    def desired_control(goal):
        goal = np.asarray(goal, dtype=float).reshape(-1)

        def u_d(t, x):
            dx = np.asarray(x, dtype=float) - goal
            return np.array([dx @ gains_1, dx @ gains_2])

        return u_d

    def rate_jac(x):
        dx0 = x[0] - x_b[0]
        dx1 = x[1] - x_b[1]
        v0 = x[2]
        v1 = x[3]
        u1, s1 = _sat_pair(u_max, -3.16 * dx0 - 4.04 * v0)
        u2, s2 = _sat_pair(u_max, -3.16 * dx1 - 4.04 * v1)
        jac = np.zeros((4, 4))
        jac[0, 2] = 1.0
        jac[1, 3] = 1.0
        jac[2] = s1 * gains_1
        jac[3] = s2 * gains_2
        return np.array([v0, v1, u1, u2]), jac

    v = robot_map.v_max
    domain = Box(
        lo=[robot_map.x_min, robot_map.y_min, -v, -v],
        hi=[robot_map.x_max, robot_map.y_max, v, v],
    )
    return ModelBundle(
        name="robot",
        system=system,
        backup=backup,
        safety=safety,
        barrier_cfg=cfg,
        poly=ControlPolytope.from_box([-u_max, -u_max], [u_max, u_max]),
        delta_t=0.02,
        domain_box=domain,
        backup_box=_quadratic_bounding_box(P, level, x_b),
        desired_control=desired_control,
        rate_jac=rate_jac,
        aux={
            "P_b": P,
            "c_b": level,
            "c_b_requested": c_b,
            "x_b": x_b,
            "gains": (gains_1, gains_2),
            "map": robot_map,
            "lyapunov_report": lyap_report,
            "u_max": u_max,
        },
    )
