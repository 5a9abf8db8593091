import numpy as np
import pytest

from softbarrier.solvers import (
    AffineHalfspace,
    ControlPolytope,
    InfeasibleError,
    UnboundedError,
    brute_force_qp_oracle,
    brute_force_qp_oracle_with_pitch,
    max_linear,
    simplex_maximize,
    solve_qp,
)

from oracles import (
    enumerate_vertices,
    lp_vertex_oracle,
    random_bounded_polytope,
    random_points_in_polytope,
)


class TestPolytopeConstruction:
    def test_box_bounds_and_feasible_point(self):
        poly = ControlPolytope.from_box([-1.0, -2.0], [1.5, 0.5])
        np.testing.assert_allclose(poly.lo, [-1.0, -2.0])
        np.testing.assert_allclose(poly.hi, [1.5, 0.5])
        assert poly.is_box
        assert poly.contains(poly.feasible_point)

    def test_general_construction_recovers_box_bounds(self):
        A = np.vstack([np.eye(2), -np.eye(2)])
        b = np.array([1.5, 0.5, 1.0, 2.0])
        poly = ControlPolytope(A, b)
        assert not poly.is_box
        np.testing.assert_allclose(poly.lo, [-1.0, -2.0], atol=1e-10)
        np.testing.assert_allclose(poly.hi, [1.5, 0.5], atol=1e-10)
        assert poly.contains(poly.feasible_point)

    def test_empty_polytope_rejected(self):
        with pytest.raises(InfeasibleError):
            ControlPolytope(np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0]))

    def test_unbounded_polytope_rejected(self):
        with pytest.raises(UnboundedError):
            ControlPolytope(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1.0, 1.0]))


class TestMaxLinear:
    def test_box_sign_rule(self):
        poly = ControlPolytope.from_box([-1.0, -1.0], [1.0, 1.0])
        value, point = max_linear(poly, [0.5, -2.0])
        assert value == pytest.approx(2.5, abs=1e-12)
        np.testing.assert_allclose(point, [1.0, -1.0])

    def test_zero_objective(self):
        poly = ControlPolytope.from_box([-1.0, -1.0], [1.0, 1.0])
        value, point = max_linear(poly, [0.0, 0.0])
        assert value == 0.0
        assert poly.contains(point)

    def test_triangle_vertex(self):
        A = np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]])
        b = np.array([0.0, 0.0, 1.0])
        poly = ControlPolytope(A, b)
        value, point = max_linear(poly, [1.0, 2.0])
        oracle_value, oracle_point = lp_vertex_oracle(A, b, [1.0, 2.0])
        assert oracle_value == pytest.approx(2.0, abs=1e-12)
        assert value == pytest.approx(oracle_value, abs=1e-9)
        np.testing.assert_allclose(point, [0.0, 1.0], atol=1e-9)

    def test_box_fast_path_equals_simplex_path(self):
        rng = np.random.default_rng(12)
        for _ in range(60):
            m = int(rng.integers(1, 4))
            lo = rng.uniform(-3.0, 0.0, size=m)
            hi = lo + rng.uniform(0.1, 3.0, size=m)
            c = rng.normal(size=m)
            box = ControlPolytope.from_box(lo, hi)
            general = ControlPolytope(
                np.vstack([np.eye(m), -np.eye(m)]), np.concatenate([hi, -lo])
            )
            v_box, _ = max_linear(box, c)
            v_gen, _ = max_linear(general, c)
            assert abs(v_box - v_gen) <= 1e-10

    def test_value_dominates_random_feasible_points(self):
        rng = np.random.default_rng(77)
        A, b, _ = random_bounded_polytope(rng, 3, extra_rows=4)
        poly = ControlPolytope(A, b)
        vertices = enumerate_vertices(A, b)
        c = rng.normal(size=3)
        value, point = max_linear(poly, c)
        assert poly.contains(point)
        samples = random_points_in_polytope(rng, vertices, 1000)
        assert np.all(samples @ c <= value + 1e-9)

    def test_matches_vertex_oracle_on_random_polytopes(self):
        rng = np.random.default_rng(4242)
        for _ in range(40):
            m = int(rng.integers(1, 4))
            A, b, _ = random_bounded_polytope(rng, m)
            poly = ControlPolytope(A, b)
            c = rng.normal(size=m)
            value, point = max_linear(poly, c)
            oracle_value, _ = lp_vertex_oracle(A, b, c)
            assert value == pytest.approx(oracle_value, abs=1e-9)
            assert poly.contains(point)


def _kkt_residual(poly, halfspace, u_d, u):
    G = np.vstack([poly.A, -halfspace.c])
    h = np.concatenate([poly.b, [halfspace.d]])
    residuals = G @ u - h
    tight = residuals >= -1e-7
    if not np.any(tight):
        return np.linalg.norm(u - u_d), 0.0
    Gt = G[tight]
    lam, *_ = np.linalg.lstsq(Gt.T, u_d - u, rcond=None)
    lam = np.clip(lam, 0.0, None)
    stationarity = np.linalg.norm((u - u_d) + Gt.T @ lam)
    slackness = float(np.abs(lam * (Gt @ u - h[tight])).max()) if lam.size else 0.0
    return stationarity, slackness


class TestSolveQp:
    def test_interior_point_returned_unchanged(self):
        poly = ControlPolytope.from_box([-1.0, -1.0], [1.0, 1.0])
        half = AffineHalfspace([1.0, 0.0], 0.9)
        u_d = np.array([0.2, -0.3])
        np.testing.assert_array_equal(solve_qp(poly, half, u_d), u_d)

    def test_scalar_clamp(self):
        poly = ControlPolytope.from_box([-1.5], [1.5])
        half = AffineHalfspace([1.0], -0.5)  # u >= 0.5
        u = solve_qp(poly, half, np.zeros(1))
        assert u[0] == pytest.approx(0.5, abs=1e-9)

    def test_projection_onto_halfspace_boundary(self):
        poly = ControlPolytope.from_box([-1.0, -1.0], [1.0, 1.0])
        half = AffineHalfspace([1.0, 1.0], -1.0)  # u1 + u2 >= 1
        u = solve_qp(poly, half, np.zeros(2))
        np.testing.assert_allclose(u, [0.5, 0.5], atol=1e-9)

    def test_degenerate_normal_projects_onto_polytope(self):
        poly = ControlPolytope.from_box([-1.0, -1.0], [1.0, 1.0])
        half = AffineHalfspace([0.0, 0.0], 0.3)
        u = solve_qp(poly, half, np.array([4.0, -0.2]))
        np.testing.assert_allclose(u, [1.0, -0.2], atol=1e-9)

    def test_degenerate_normal_with_negative_offset_is_infeasible(self):
        poly = ControlPolytope.from_box([-1.0], [1.0])
        with pytest.raises(InfeasibleError):
            solve_qp(poly, AffineHalfspace([0.0], -0.5), np.zeros(1))

    def test_disjoint_halfspace_is_infeasible(self):
        poly = ControlPolytope.from_box([-1.0], [1.0])
        with pytest.raises(InfeasibleError):
            solve_qp(poly, AffineHalfspace([1.0], -2.0), np.zeros(1))

    def test_oracle_agreement_on_named_cases(self):
        poly = ControlPolytope.from_box([-1.0, -1.0], [1.0, 1.0])
        cases = [
            (AffineHalfspace([1.0, 1.0], -1.0), np.zeros(2)),
            (AffineHalfspace([1.0, 0.0], 0.9), np.array([0.2, -0.3])),
            (AffineHalfspace([-2.0, 1.0], 0.4), np.array([1.8, 1.6])),
        ]
        for half, u_d in cases:
            u = solve_qp(poly, half, u_d)
            ref, pitch = brute_force_qp_oracle_with_pitch(poly, half, u_d)
            assert np.linalg.norm(u - ref) <= 2.0 * pitch

    def test_oracle_reports_empty_grid_as_infeasible(self):
        poly = ControlPolytope.from_box([-1.0], [1.0])
        assert brute_force_qp_oracle(poly, AffineHalfspace([1.0], -2.0), np.zeros(1)) is None

    def test_random_instances_satisfy_kkt_and_beat_perturbations(self):
        rng = np.random.default_rng(2024)
        for _ in range(60):
            m = int(rng.integers(1, 4))
            A, b, anchor = random_bounded_polytope(rng, m)
            poly = ControlPolytope(A, b)
            c = rng.normal(size=m)
            d = float(-c @ anchor + rng.uniform(0.0, 0.5))
            half = AffineHalfspace(c, d)
            u_d = rng.uniform(-3.0, 3.0, size=m)
            u = solve_qp(poly, half, u_d)
            assert np.all(A @ u <= b + 1e-9)
            assert c @ u + d >= -1e-9
            stationarity, slackness = _kkt_residual(poly, half, u_d, u)
            assert stationarity <= 1e-8
            assert slackness <= 1e-7
            # random feasible perturbations cannot do better
            vertices = enumerate_vertices(
                np.vstack([A, -c[None, :]]), np.concatenate([b, [d]])
            )
            if len(vertices) >= m + 1:
                trials = random_points_in_polytope(rng, vertices, 200)
                assert np.all(
                    np.linalg.norm(trials - u_d, axis=1)
                    >= np.linalg.norm(u - u_d) - 1e-9
                )

    def test_random_instances_match_grid_oracle(self):
        # the grid minimizer slides along slanted active faces (position error
        # ~ sqrt(pitch)), so agreement is asserted on the minimized distance
        rng = np.random.default_rng(99)
        for _ in range(40):
            m = int(rng.integers(1, 4))
            A, b, anchor = random_bounded_polytope(rng, m)
            poly = ControlPolytope(A, b)
            c = rng.normal(size=m)
            d = float(-c @ anchor + rng.uniform(0.1, 0.6))
            half = AffineHalfspace(c, d)
            u_d = rng.uniform(-2.5, 2.5, size=m)
            u = solve_qp(poly, half, u_d)
            ref, pitch = brute_force_qp_oracle_with_pitch(poly, half, u_d)
            if ref is None:
                continue
            obj_qp = np.linalg.norm(u - u_d)
            obj_ref = np.linalg.norm(ref - u_d)
            assert obj_qp <= obj_ref + 1e-9
            assert abs(obj_qp - obj_ref) <= 2.0 * pitch
