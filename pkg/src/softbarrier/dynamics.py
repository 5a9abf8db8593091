"""Plant and backup-policy descriptions, and RK4 propagation of the backup flow
together with its state-sensitivity matrix.

The flow map ``phi(x, tau)`` is the solution of ``dx/dtau = f(x) + g(x) u_b(x)``
from initial state x.  Its Jacobian with respect to x, ``Q(x, tau)``, satisfies
the matrix variational equation ``dQ/dtau = J(phi) Q`` with ``Q(x, 0) = I``,
where J is the Jacobian of the closed-loop field.  Both are integrated jointly
with classical fixed-step RK4.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SystemModel",
    "BackupPolicy",
    "ClosedLoopField",
    "FlowTable",
    "FlowDivergenceError",
    "fd_jacobian",
    "rk4_step",
    "propagate_flow",
    "propagate_states",
]

# States whose norm exceeds this are treated as numerical blow-up.
DIVERGENCE_LIMIT = 1e9


class FlowDivergenceError(RuntimeError):
    """Raised when flow propagation produces a non-finite or huge state."""

    def __init__(self, sample_index, message=None):
        self.sample_index = sample_index
        super().__init__(
            message or f"flow diverged while integrating toward sample {sample_index}"
        )


@dataclass(frozen=True)
class SystemModel:
    """Control-affine plant dx/dt = f(x) + g(x) u.

    ``f`` maps states (..., n) to rates (..., n); ``g`` maps states to input
    matrices (..., n, m).  Both must broadcast over leading axes (batch
    evaluation is used for sampling sweeps).  ``jac_f`` returns the n x n
    Jacobian of f at a single state; ``jac_g`` returns an (m, n, n) array whose
    j-th entry is the Jacobian of the j-th column of g.  When either is
    omitted, closed-loop Jacobians fall back to finite differences.
    """

    n: int
    m: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    jac_f: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jac_g: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class BackupPolicy:
    """Backup control law with its safe-set function.

    ``u_b`` maps states (..., n) to admissible controls (..., m); ``h_b`` is
    the backup safe-set function whose zero-superlevel set is forward invariant
    under u_b; ``grad_hb`` is its gradient.  ``jac_ub`` returns the (m, n)
    Jacobian of u_b at a single state (finite differences are used if absent).
    """

    u_b: Callable[[np.ndarray], np.ndarray]
    h_b: Callable[[np.ndarray], np.ndarray]
    grad_hb: Callable[[np.ndarray], np.ndarray]
    jac_ub: Optional[Callable[[np.ndarray], np.ndarray]] = None


def fd_jacobian(fun, x, rel_step=1e-6):
    """Central finite-difference Jacobian with per-axis step rel_step*max(1, |x_i|)."""
    x = np.asarray(x, dtype=float)
    steps = rel_step * np.maximum(1.0, np.abs(x))
    cols = []
    for i in range(x.size):
        d = np.zeros_like(x)
        d[i] = steps[i]
        cols.append((np.asarray(fun(x + d)) - np.asarray(fun(x - d))) / (2.0 * steps[i]))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class ClosedLoopField:
    """The closed-loop vector field under the backup control, f(x) + g(x) u_b(x).

    ``rate_jac`` is an optional fused fast path returning (ftilde(x), jacobian(x))
    in one call for a single state; benchmark models provide it so the joint
    flow/sensitivity integration avoids re-evaluating shared subexpressions.
    It must agree with the generic path (this is covered by tests).
    """

    system: SystemModel
    backup: BackupPolicy
    rate_jac: Optional[Callable] = None

    def pair(self, x):
        """Closed-loop rate and Jacobian at a single state."""
        if self.rate_jac is not None:
            return self.rate_jac(x)
        return self.ftilde(x), self.jacobian(x)

    def ftilde(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.system.n:
            raise ValueError(
                f"state has dimension {x.shape[-1]}, expected {self.system.n}"
            )
        u = np.asarray(self.backup.u_b(x), dtype=float)
        if u.shape[-1] != self.system.m:
            raise ValueError(
                f"backup control has dimension {u.shape[-1]}, expected {self.system.m}"
            )
        gx = np.asarray(self.system.g(x), dtype=float)
        return np.asarray(self.system.f(x), dtype=float) + np.einsum(
            "...nm,...m->...n", gx, u
        )

    def jacobian(self, x):
        """Jacobian of the closed-loop field at a single state.

        Chain rule when analytic Jacobians are available on both the plant and
        the backup policy, otherwise central finite differences on ``ftilde``.
        """
        x = np.asarray(x, dtype=float)
        sys = self.system
        if sys.jac_f is not None and sys.jac_g is not None and self.backup.jac_ub is not None:
            u = np.asarray(self.backup.u_b(x), dtype=float)
            jf = np.asarray(sys.jac_f(x), dtype=float)
            jg = np.asarray(sys.jac_g(x), dtype=float)  # (m, n, n)
            ju = np.asarray(self.backup.jac_ub(x), dtype=float)  # (m, n)
            gx = np.asarray(sys.g(x), dtype=float)
            return jf + np.einsum("j,jab->ab", u, jg) + gx @ ju
        return fd_jacobian(self.ftilde, x)


@dataclass
class FlowTable:
    """Backup-flow samples phi(x, i*t_sample) and sensitivities Q(x, i*t_sample).

    ``states`` has shape (N+1, n) with states[0] = x; ``sensitivities`` has
    shape (N+1, n, n) with sensitivities[0] = I; ``t_grid`` holds the sample
    instants.
    """

    states: np.ndarray
    sensitivities: np.ndarray
    t_grid: np.ndarray


def rk4_step(fun, x, dt):
    """One classical RK4 step of dx/dt = fun(x)."""
    k1 = fun(x)
    k2 = fun(x + (0.5 * dt) * k1)
    k3 = fun(x + (0.5 * dt) * k2)
    k4 = fun(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _diverged(x):
    return not np.all(np.isfinite(x)) or float(np.abs(x).max()) > DIVERGENCE_LIMIT


def propagate_flow(field, x, n_samples, t_sample, substeps=5):
    """Jointly integrate the backup flow and its sensitivity matrix.

    Runs ``n_samples`` sample intervals of length ``t_sample``, each split into
    ``substeps`` RK4 steps of the augmented system (phi, Q).  Returns a
    FlowTable with values at the sample instants.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if t_sample <= 0.0:
        raise ValueError("t_sample must be positive")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size
    if n != field.system.n:
        raise ValueError(f"state has dimension {n}, expected {field.system.n}")
    dt = t_sample / substeps
    states = np.empty((n_samples + 1, n))
    sens = np.empty((n_samples + 1, n, n))
    states[0] = x
    q = np.eye(n)
    sens[0] = q
    pair = field.pair
    for i in range(n_samples):
        for _ in range(substeps):
            k1x, j1 = pair(x)
            k1q = j1 @ q
            k2x, j2 = pair(x + (0.5 * dt) * k1x)
            k2q = j2 @ (q + (0.5 * dt) * k1q)
            k3x, j3 = pair(x + (0.5 * dt) * k2x)
            k3q = j3 @ (q + (0.5 * dt) * k2q)
            k4x, j4 = pair(x + dt * k3x)
            k4q = j4 @ (q + dt * k3q)
            x = x + (dt / 6.0) * (k1x + 2.0 * (k2x + k3x) + k4x)
            q = q + (dt / 6.0) * (k1q + 2.0 * (k2q + k3q) + k4q)
        if _diverged(x) or not np.all(np.isfinite(q)):
            raise FlowDivergenceError(i + 1)
        states[i + 1] = x
        sens[i + 1] = q
    t_grid = t_sample * np.arange(n_samples + 1)
    return FlowTable(states=states, sensitivities=sens, t_grid=t_grid)


def propagate_states(field, x0, n_samples, t_sample, substeps=5):
    """Integrate the backup flow only (no sensitivities), batched.

    ``x0`` may carry arbitrary leading batch axes, shape (..., n); the result
    has shape (n_samples+1, ..., n).  The model callables must broadcast.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if t_sample <= 0.0:
        raise ValueError("t_sample must be positive")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    x = np.asarray(x0, dtype=float)
    dt = t_sample / substeps
    out = np.empty((n_samples + 1,) + x.shape)
    out[0] = x
    ft = field.ftilde
    for i in range(n_samples):
        for _ in range(substeps):
            x = rk4_step(ft, x, dt)
        if _diverged(x):
            raise FlowDivergenceError(i + 1)
        out[i + 1] = x
    return out
