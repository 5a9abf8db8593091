"""Small dense solvers for the control polytope.

Two problems are solved online, both tiny (m <= 4 controls, a handful of
constraints): maximizing a linear functional over the admissible-control
polytope, and the minimum-intervention projection of a desired control onto the
polytope intersected with one affine halfspace.  Both are solved in-repo (a
two-phase tableau simplex with Bland's rule, and a primal active-set iteration)
for determinism; no external solver is involved.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SolverError",
    "InfeasibleError",
    "UnboundedError",
    "AffineHalfspace",
    "ControlPolytope",
    "max_linear",
    "simplex_maximize",
    "solve_qp",
    "brute_force_qp_oracle",
    "brute_force_qp_oracle_with_pitch",
]

_PIVOT_TOL = 1e-10
_FEAS_TOL = 1e-9
_KKT_TOL = 1e-8
_MAX_ACTIVE_SET_ITERS = 50


class SolverError(RuntimeError):
    pass


class InfeasibleError(SolverError):
    pass


class UnboundedError(SolverError):
    pass


@dataclass(frozen=True)
class AffineHalfspace:
    """The halfspace { u : c . u + d >= 0 }."""

    c: np.ndarray
    d: float

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).reshape(-1))
        object.__setattr__(self, "d", float(self.d))
        if not np.all(np.isfinite(self.c)) or not np.isfinite(self.d):
            raise ValueError("halfspace coefficients must be finite")


def _pivot_minimize(T, basis, cost):
    """Pivot the canonical tableau T (rows x [cols | rhs]) to minimize cost.x.

    Bland's rule on both the entering and the leaving choice, so the iteration
    cannot cycle.  Raises UnboundedError when an improving column has no
    blocking row.
    """
    r = T.shape[0]
    ncols = T.shape[1] - 1
    while True:
        cb = cost[basis]
        reduced = cost[:ncols] - cb @ T[:, :ncols]
        entering = -1
        for j in range(ncols):
            if reduced[j] < -_PIVOT_TOL:
                entering = j
                break
        if entering < 0:
            return
        leave = -1
        best_ratio = np.inf
        for i in range(r):
            a = T[i, entering]
            if a > _PIVOT_TOL:
                ratio = T[i, -1] / a
                if ratio < best_ratio - _PIVOT_TOL or (
                    abs(ratio - best_ratio) <= _PIVOT_TOL
                    and leave >= 0
                    and basis[i] < basis[leave]
                ):
                    best_ratio = ratio
                    leave = i
        if leave < 0:
            raise UnboundedError("objective unbounded over the constraint set")
        T[leave] /= T[leave, entering]
        for i in range(r):
            if i != leave and T[i, entering] != 0.0:
                T[i] -= T[i, entering] * T[leave]
        basis[leave] = entering


def _standard_simplex(A, b, c):
    """Maximize c.x subject to A x = b, x >= 0 via the two-phase method."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).copy()
    c = np.asarray(c, dtype=float)
    r, n = A.shape
    A = A.copy()
    flip = b < 0.0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # Phase 1: artificial basis, minimize the sum of artificials.
    T = np.hstack([A, np.eye(r), b[:, None]])
    basis = list(range(n, n + r))
    cost1 = np.concatenate([np.zeros(n), np.ones(r)])
    _pivot_minimize(T, basis, cost1)
    if cost1[basis] @ T[:, -1] > _FEAS_TOL:
        raise InfeasibleError("constraint set is empty")
    # Drive leftover artificials out of the basis; drop redundant rows.
    keep = []
    for i in range(r):
        if basis[i] >= n:
            pivot_col = -1
            for j in range(n):
                if abs(T[i, j]) > _PIVOT_TOL:
                    pivot_col = j
                    break
            if pivot_col < 0:
                continue  # redundant constraint row
            T[i] /= T[i, pivot_col]
            for k in range(r):
                if k != i and T[k, pivot_col] != 0.0:
                    T[k] -= T[k, pivot_col] * T[i]
            basis[i] = pivot_col
        keep.append(i)
    T = np.hstack([T[keep][:, :n], T[keep][:, -1:]])
    basis = [basis[i] for i in keep]

    # Phase 2: maximize c.x, i.e. minimize (-c).x.
    cost2 = -c
    _pivot_minimize(T, basis, cost2)
    x = np.zeros(n)
    for i, var in enumerate(basis):
        x[var] = T[i, -1]
    return float(c @ x), x


def simplex_maximize(A, b, c):
    """Maximize c.u over { u : A u <= b } with u free.

    Free variables are split into positive parts and slacks are appended; the
    result is the optimal value and one maximizer (a vertex).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float).reshape(-1)
    r, m = A.shape
    A_std = np.hstack([A, -A, np.eye(r)])
    c_std = np.concatenate([c, -c, np.zeros(r)])
    value, x = _standard_simplex(A_std, b, c_std)
    return value, x[:m] - x[m : 2 * m]


class ControlPolytope:
    """Bounded nonempty polytope of admissible controls { u : A u <= b }.

    Construction verifies the set is nonempty (a feasible point is computed)
    and bounded (one support solve per coordinate direction); per-axis support
    bounds are kept for grid oracles.  Use ``from_box`` for axis-aligned boxes,
    which enables closed-form linear maximization.
    """

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.size:
            raise ValueError("constraint matrix and offsets disagree in size")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("constraints must be finite")
        self.A = A
        self.b = b
        self.m = A.shape[1]
        self.is_box = False
        self.lo = np.empty(self.m)
        self.hi = np.empty(self.m)
        _, self.feasible_point = simplex_maximize(A, b, np.zeros(self.m))
        for i in range(self.m):
            e = np.zeros(self.m)
            e[i] = 1.0
            self.hi[i], _ = simplex_maximize(A, b, e)
            low_val, _ = simplex_maximize(A, b, -e)
            self.lo[i] = -low_val

    @classmethod
    def from_box(cls, lo, hi):
        lo = np.asarray(lo, dtype=float).reshape(-1)
        hi = np.asarray(hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have matching shapes")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(hi < lo):
            raise InfeasibleError("box is empty")
        obj = cls.__new__(cls)
        m = lo.size
        obj.A = np.vstack([np.eye(m), -np.eye(m)])
        obj.b = np.concatenate([hi, -lo])
        obj.m = m
        obj.is_box = True
        obj.lo = lo
        obj.hi = hi
        obj.feasible_point = 0.5 * (lo + hi)
        return obj

    def contains(self, u, tol=_FEAS_TOL):
        return bool(np.all(self.A @ np.asarray(u, dtype=float) <= self.b + tol))


def max_linear(poly, c):
    """Maximize c.u over the polytope; returns (value, maximizer).

    Boxes are solved coordinatewise by the sign of c; general polytopes go
    through the dense simplex.
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.size != poly.m:
        raise ValueError(f"objective has dimension {c.size}, expected {poly.m}")
    if poly.is_box:
        u = np.where(c > 0.0, poly.hi, np.where(c < 0.0, poly.lo, poly.feasible_point))
        return float(c @ u), u
    return simplex_maximize(poly.A, poly.b, c)


def _project_affine(u_d, G_active, h_active):
    """Projection of u_d onto { z : G_active z = h_active } (least-norm shift)."""
    M = G_active @ G_active.T
    rhs = G_active @ u_d - h_active
    mu = np.linalg.lstsq(M, rhs, rcond=None)[0]
    return u_d - G_active.T @ mu


def solve_qp(poly, halfspace, u_d):
    """Minimize ||u - u_d||^2 over the polytope intersected with the halfspace.

    Primal active-set iteration on the stacked inequality rows; the caller must
    guarantee the intersection is nonempty.  When the halfspace normal is
    numerically zero the constraint degenerates to a sign check on its offset
    and the projection runs over the polytope alone.
    """
    u_d = np.asarray(u_d, dtype=float).reshape(-1)
    if u_d.size != poly.m:
        raise ValueError(f"desired control has dimension {u_d.size}, expected {poly.m}")
    c = halfspace.c
    if c.size != poly.m:
        raise ValueError("halfspace dimension does not match the polytope")
    if np.linalg.norm(c) < 1e-12:
        if halfspace.d < -_FEAS_TOL:
            raise InfeasibleError("degenerate halfspace excludes every control")
        G = poly.A
        h = poly.b
        start = poly.feasible_point
    else:
        G = np.vstack([poly.A, -c])
        h = np.concatenate([poly.b, [halfspace.d]])
        value, argmax = max_linear(poly, c)
        if value + halfspace.d < -_FEAS_TOL:
            raise InfeasibleError("polytope does not intersect the halfspace")
        start = argmax

    if np.all(G @ u_d <= h + 1e-12):
        return u_d.copy()

    x = np.asarray(start, dtype=float).copy()
    n_rows = G.shape[0]
    active = [i for i in range(n_rows) if abs(G[i] @ x - h[i]) <= _FEAS_TOL]
    for _ in range(_MAX_ACTIVE_SET_ITERS):
        if active:
            Ga = G[active]
            z = _project_affine(u_d, Ga, h[active])
        else:
            z = u_d
        p = z - x
        if np.linalg.norm(p) <= 1e-11:
            if not active:
                break
            lam = np.linalg.lstsq(G[active].T, u_d - x, rcond=None)[0]
            negative = [k for k in range(len(active)) if lam[k] < -1e-10]
            if not negative:
                break
            drop = min(negative, key=lambda k: active[k])
            active.pop(drop)
            continue
        step = 1.0
        blocker = -1
        for i in range(n_rows):
            if i in active:
                continue
            advance = G[i] @ p
            if advance > 1e-14:
                room = (h[i] - G[i] @ x) / advance
                if room < step - 1e-14:
                    step = max(room, 0.0)
                    blocker = i
        x = x + step * p
        if blocker >= 0 and step < 1.0:
            active.append(blocker)
            active.sort()
    else:
        raise SolverError("active-set iteration failed to converge")

    _verify_qp_solution(poly, halfspace, u_d, x, G, h)
    return x


def _verify_qp_solution(poly, halfspace, u_d, x, G, h):
    residuals = G @ x - h
    if np.any(residuals > _FEAS_TOL):
        raise SolverError("QP solution violates a constraint beyond tolerance")
    tight = [i for i in range(G.shape[0]) if residuals[i] >= -1e-7]
    if tight:
        lam, *_ = np.linalg.lstsq(G[tight].T, u_d - x, rcond=None)
        lam = np.clip(lam, 0.0, None)
        stationarity = (x - u_d) + G[tight].T @ lam
    else:
        stationarity = x - u_d
    if np.linalg.norm(stationarity) > _KKT_TOL:
        raise SolverError("QP solution fails the stationarity check")


def brute_force_qp_oracle(poly, halfspace, u_d, grid_density=15, refinements=2):
    """Grid-search oracle for ``solve_qp``; test use only (m <= 3).

    Scans a dense grid over the polytope's bounding box, keeps feasible points,
    and refines twice around the near-optimal candidates.  Returns None when no
    grid point is feasible.
    """
    point, _ = brute_force_qp_oracle_with_pitch(
        poly, halfspace, u_d, grid_density, refinements
    )
    return point


def brute_force_qp_oracle_with_pitch(poly, halfspace, u_d, grid_density=15, refinements=2):
    """As ``brute_force_qp_oracle`` but also returns the final grid pitch.

    Each refinement window is the bounding box of every feasible candidate
    within a lattice-covering margin of the incumbent objective (expanded by
    that margin), which keeps the true minimizer inside the window even when
    it sits on a face that slants across the grid.
    """
    if poly.m > 3:
        raise ValueError("grid oracle supports at most 3 control dimensions")
    u_d = np.asarray(u_d, dtype=float).reshape(-1)
    c = halfspace.c
    degenerate = np.linalg.norm(c) < 1e-12
    if degenerate and halfspace.d < -_FEAS_TOL:
        return None, 0.0
    lo = poly.lo.copy()
    hi = poly.hi.copy()
    best = None
    pitch = 0.0
    for _ in range(refinements + 1):
        axes = [np.linspace(lo[i], hi[i], grid_density) for i in range(poly.m)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, poly.m)
        feasible = np.all(pts @ poly.A.T <= poly.b + _FEAS_TOL, axis=1)
        if not degenerate:
            feasible &= pts @ c + halfspace.d >= -_FEAS_TOL
        if not np.any(feasible):
            return None, 0.0
        candidates = pts[feasible]
        distances = np.linalg.norm(candidates - u_d, axis=1)
        best = candidates[np.argmin(distances)]
        pitch = float(((hi - lo) / (grid_density - 1)).max())
        margin = 2.0 * np.sqrt(poly.m) * pitch
        near = candidates[distances <= distances.min() + margin]
        lo = np.maximum(near.min(axis=0) - margin, poly.lo)
        hi = np.minimum(near.max(axis=0) + margin, poly.hi)
    return best, pitch
