"""Independent oracles used by the test suite.

These deliberately avoid the library's solution paths: linear programs are
checked against explicit vertex enumeration, quadratic programs against a
refined grid, and flows against closed forms or finite differences.
"""

from itertools import combinations

import numpy as np


def enumerate_vertices(A, b, tol=1e-9):
    """All vertices of { u : A u <= b } by basis enumeration."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    r, m = A.shape
    vertices = []
    for rows in combinations(range(r), m):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        v = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ v <= b + tol):
            if not any(np.linalg.norm(v - w) <= 1e-9 for w in vertices):
                vertices.append(v)
    return np.array(vertices)


def lp_vertex_oracle(A, b, c):
    """Exact LP maximum over a bounded polytope via vertex enumeration."""
    vertices = enumerate_vertices(A, b)
    if vertices.size == 0:
        raise AssertionError("oracle found no vertices; polytope empty or unbounded?")
    values = vertices @ np.asarray(c, dtype=float)
    best = int(np.argmax(values))
    return float(values[best]), vertices[best]


def random_bounded_polytope(rng, m, extra_rows=3, box_scale=None):
    """A random nonempty bounded polytope: a box plus halfspaces kept feasible
    around an interior anchor point."""
    scale = box_scale if box_scale is not None else rng.uniform(0.8, 2.5)
    A = [np.eye(m), -np.eye(m)]
    b = [np.full(m, scale), np.full(m, scale)]
    anchor = rng.uniform(-0.3 * scale, 0.3 * scale, size=m)
    for _ in range(extra_rows):
        normal = rng.normal(size=m)
        normal /= np.linalg.norm(normal)
        margin = rng.uniform(0.2 * scale, 1.2 * scale)
        A.append(normal[None, :])
        b.append(np.array([normal @ anchor + margin]))
    return np.vstack(A), np.concatenate(b), anchor


def random_points_in_polytope(rng, vertices, count):
    """Random convex combinations of the vertices (feasible by convexity)."""
    weights = rng.dirichlet(np.ones(len(vertices)), size=count)
    return weights @ vertices


def qp_kkt_residual(A, b, c, d, u_d, u):
    """Stationarity and complementary-slackness residuals of a projection QP.

    The problem is min ||u - u_d||^2 over { A u <= b } intersected with
    { c.u + d >= 0 }; multipliers are recovered by least squares over the
    tight constraints and clipped to be nonnegative.
    """
    G = np.vstack([A, -np.asarray(c, dtype=float)[None, :]])
    h = np.concatenate([b, [d]])
    residuals = G @ u - h
    tight = residuals >= -1e-7
    if not np.any(tight):
        return float(np.linalg.norm(u - u_d)), 0.0
    Gt = G[tight]
    lam, *_ = np.linalg.lstsq(Gt.T, u_d - u, rcond=None)
    lam = np.clip(lam, 0.0, None)
    stationarity = float(np.linalg.norm((u - u_d) + Gt.T @ lam))
    slackness = float(np.abs(lam * (Gt @ u - h[tight])).max()) if lam.size else 0.0
    return stationarity, slackness
