"""Acceptance suite: one test per primary criterion, each printing a PASS/FAIL
line (run with ``pytest -s`` to see them).  The plot smoke criterion lives in
the plotting package's own test suite."""

import math
import time

import numpy as np
import pytest

from softbarrier.barrier import flow_margins, sampled_barrier, softmin_barrier
from softbarrier.controller import MODE_QP, feasibility_metric
from softbarrier.barrier import evaluate_barrier
from softbarrier.dynamics import propagate_flow, propagate_states
from softbarrier.experiments import load_config, run_experiment
from softbarrier.smooth import softmin
from softbarrier.solvers import (
    AffineHalfspace,
    ControlPolytope,
    brute_force_qp_oracle_with_pitch,
    max_linear,
    solve_qp,
)
from softbarrier.systems import build_pendulum

from oracles import lp_vertex_oracle, qp_kkt_residual, random_bounded_polytope


def _criterion(num, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] acceptance criterion {num}: {detail}")
    assert ok, f"criterion {num} failed: {detail}"


@pytest.fixture(scope="module")
def pendulum_bundle():
    return build_pendulum()


@pytest.fixture(scope="module")
def pendulum_result(tmp_path_factory):
    cfg = load_config("configs/pendulum.yaml")
    out = tmp_path_factory.mktemp("pendulum_acceptance")
    started = time.perf_counter()
    result = run_experiment(cfg, out_dir=out, quiet=True)
    result.config["__wall"] = time.perf_counter() - started
    return result


@pytest.fixture(scope="module")
def robot_result(tmp_path_factory):
    cfg = load_config("configs/robot.yaml")
    out = tmp_path_factory.mktemp("robot_acceptance")
    started = time.perf_counter()
    result = run_experiment(cfg, out_dir=out, quiet=True)
    result.config["__wall"] = time.perf_counter() - started
    return result


def test_criterion_01_softmin_bounds():
    started = time.perf_counter()
    rng = np.random.default_rng(101)
    total = 0
    worst_low = np.inf
    ok = True
    for rho in (1.0, 10.0, 100.0, 1000.0):
        for _ in range(25):
            n = int(rng.integers(2, 61))
            batch = rng.uniform(-1000.0, 1000.0, size=(100, n))
            sm = softmin(rho, batch, axis=1)
            mn = batch.min(axis=1)
            lower = mn - math.log(n) / rho
            ok &= bool(np.all(lower - 1e-12 <= sm))
            ok &= bool(np.all(sm < mn + 1e-12))
            worst_low = min(worst_low, float((sm - lower).min()))
            total += batch.shape[0]
    elapsed = time.perf_counter() - started
    ok &= total >= 10_000 and elapsed < 1.0
    _criterion(
        1,
        ok,
        f"softmin bounds on {total} tuples, min slack above lower bound "
        f"{worst_low:.3e}, {elapsed:.2f} s",
    )


def test_criterion_02_sensitivity_and_gradient(pendulum_bundle):
    started = time.perf_counter()
    b = pendulum_bundle
    cfg = b.barrier_cfg
    rng = np.random.default_rng(202)
    delta = 1e-5
    worst_q = 0.0
    worst_g = 0.0
    n_grad = 0
    for _ in range(100):
        x = rng.uniform(-2.2, 2.2, size=2)
        table = propagate_flow(b.field, x, cfg.n_samples, cfg.t_sample, cfg.substeps)
        perturbed = np.stack([x + delta * e for e in np.eye(2)] + [x - delta * e for e in np.eye(2)])
        flows = propagate_states(b.field, perturbed, cfg.n_samples, cfg.t_sample, cfg.substeps)
        for j in range(2):
            col_fd = (flows[-1, j] - flows[-1, 2 + j]) / (2 * delta)
            col = table.sensitivities[-1][:, j]
            rel = np.linalg.norm(col_fd - col) / max(np.linalg.norm(col), 1e-8)
            worst_q = max(worst_q, rel)
        hbar = sampled_barrier(b.safety, b.backup, table.states)
        if hbar >= 0.0 and n_grad < 100:
            ev = evaluate_barrier(b.system, b.backup, b.safety, cfg, x, field=b.field)
            h_pert = softmin_barrier(b.safety, b.backup, flows, cfg.rho)
            grad_fd = np.array(
                [(h_pert[j] - h_pert[2 + j]) / (2 * delta) for j in range(2)]
            )
            rel = np.linalg.norm(ev.grad_h - grad_fd) / max(np.linalg.norm(grad_fd), 1e-9)
            worst_g = max(worst_g, rel)
            n_grad += 1
    elapsed = time.perf_counter() - started
    ok = worst_q <= 1e-4 and worst_g <= 1e-3 and n_grad >= 40 and elapsed < 30.0
    _criterion(
        2,
        ok,
        f"sensitivity rel err {worst_q:.2e} (<=1e-4), gradient rel err "
        f"{worst_g:.2e} (<=1e-3) on {n_grad} in-set states, {elapsed:.1f} s",
    )


def test_criterion_03_solver_oracles():
    started = time.perf_counter()
    rng = np.random.default_rng(303)
    worst_lp = 0.0
    for i in range(500):
        m = int(rng.integers(1, 4))
        if i % 2 == 0:
            lo = rng.uniform(-2.0, 0.0, size=m)
            hi = lo + rng.uniform(0.2, 2.5, size=m)
            poly = ControlPolytope.from_box(lo, hi)
        else:
            A, b, _ = random_bounded_polytope(rng, m)
            poly = ControlPolytope(A, b)
        c = rng.normal(size=m)
        value, point = max_linear(poly, c)
        oracle_value, _ = lp_vertex_oracle(poly.A, poly.b, c)
        worst_lp = max(worst_lp, abs(value - oracle_value))
        assert poly.contains(point)

    worst_obj_gap = 0.0
    worst_kkt = 0.0
    compared = 0
    for _ in range(500):
        m = int(rng.integers(1, 4))
        A, b, anchor = random_bounded_polytope(rng, m)
        poly = ControlPolytope(A, b)
        c = rng.normal(size=m)
        d = float(-c @ anchor + rng.uniform(0.05, 0.6))
        half = AffineHalfspace(c, d)
        u_d = rng.uniform(-3.0, 3.0, size=m)
        u = solve_qp(poly, half, u_d)
        stationarity, slack = qp_kkt_residual(poly.A, poly.b, c, d, u_d, u)
        worst_kkt = max(worst_kkt, stationarity, slack)
        ref, pitch = brute_force_qp_oracle_with_pitch(poly, half, u_d)
        if ref is None:
            continue
        compared += 1
        obj_gap = abs(np.linalg.norm(u - u_d) - np.linalg.norm(ref - u_d))
        assert np.linalg.norm(u - u_d) <= np.linalg.norm(ref - u_d) + 1e-9
        worst_obj_gap = max(worst_obj_gap, obj_gap / (2.0 * pitch))
    elapsed = time.perf_counter() - started
    ok = (
        worst_lp <= 1e-9
        and worst_obj_gap <= 1.0
        and worst_kkt <= 1e-8
        and compared >= 450
        and elapsed < 60.0
    )
    _criterion(
        3,
        ok,
        f"LP vs vertex enumeration gap {worst_lp:.2e} (<=1e-9) on 500 instances; "
        f"QP objective gap {worst_obj_gap:.2f}x tolerance on {compared} instances, "
        f"KKT residual {worst_kkt:.2e} (<=1e-8), {elapsed:.1f} s",
    )


def test_criterion_04_pendulum_experiment(pendulum_result, pendulum_bundle):
    res = pendulum_result
    b = pendulum_bundle
    cfg = b.barrier_cfg
    eps_runs = [rr for rr in res.runs if rr.epsilon == 0.0]
    thr_runs = [rr for rr in res.runs if rr.epsilon > 0.0]
    assert len(eps_runs) == 4 and len(thr_runs) == 4

    # (a) admissibility of every logged control
    worst_violation = max(
        float((np.abs(rr.log.controls) - 1.5).max()) for rr in res.runs
    )
    ok_a = worst_violation <= 1e-9

    # (b) tick-level nonnegativity on the zero-threshold runs
    min_hs = min(float(rr.log.h_s.min()) for rr in eps_runs)
    min_h = min(float(rr.log.h.min()) for rr in eps_runs)
    min_hbar = min(float(rr.log.hbar_star.min()) for rr in eps_runs)
    ok_b = min(min_hs, min_h, min_hbar) >= -1e-6

    # (c) margin runs stay predicted-safe on the 10x fine grid
    fine_min = np.inf
    for rr in thr_runs:
        states = propagate_states(
            b.field, rr.log.fine_states, cfg.n_samples, cfg.t_sample, cfg.substeps
        )
        fine_min = min(
            fine_min, float(sampled_barrier(b.safety, b.backup, states).min())
        )
    ok_c = fine_min >= -1e-6

    # (d) the projection stays feasible along the zero-threshold runs
    min_beta = min(float(rr.log.beta.min()) for rr in eps_runs)
    ok_d = min_beta > 0.0

    # (e) margin runs are more conservative than their mirrored partners
    ok_e = True
    pairing = []
    for rr in thr_runs:
        mirror_x0 = [-v for v in rr.log.metadata["x0"]]
        partner = next(
            p for p in eps_runs if np.allclose(p.log.metadata["x0"], mirror_x0)
        )
        pairing.append(
            (rr.log.metadata["x0"][0], rr.log.hbar_star.min(), partner.log.hbar_star.min())
        )
        ok_e &= bool(rr.log.hbar_star.min() > partner.log.hbar_star.min())

    elapsed = res.config["__wall"]
    ok = ok_a and ok_b and ok_c and ok_d and ok_e and elapsed < 60.0
    _criterion(
        4,
        ok,
        "pendulum sweep: "
        f"(a) control violation {worst_violation:.1e}<=1e-9 {ok_a}; "
        f"(b) min h_s/h/hbar {min_hs:.4f}/{min_h:.4f}/{min_hbar:.4f}>=-1e-6 {ok_b}; "
        f"(c) fine-grid hbar {fine_min:.4f}>=-1e-6 {ok_c}; "
        f"(d) min beta {min_beta:.4f}>0 {ok_d}; "
        f"(e) margin runs more conservative {ok_e}; {elapsed:.1f} s",
    )


def test_criterion_05_backup_invariance_sweep(pendulum_bundle):
    started = time.perf_counter()
    b = pendulum_bundle
    cfg = b.barrier_cfg
    n = cfg.n_samples
    rng = np.random.default_rng(505)
    pts = rng.uniform(-np.pi, np.pi, size=(1200, 2))
    long_states = propagate_states(b.field, pts, 2 * n, cfg.t_sample, cfg.substeps)
    z_s = np.asarray(b.safety.h_s(long_states))
    z_b = np.asarray(b.backup.h_b(long_states))
    hbar_at = np.empty((n + 1, pts.shape[0]))
    for i in range(n + 1):
        hbar_at[i] = np.minimum(z_s[i : i + n + 1].min(axis=0), z_b[i + n])
    inside = hbar_at[0] >= 0.0
    count = int(inside.sum())
    min_along = float(hbar_at[:, inside].min())
    min_terminal = float(z_b[n, inside].min())
    elapsed = time.perf_counter() - started
    ok = count >= 500 and min_along >= -1e-6 and min_terminal >= -1e-6 and elapsed < 60.0
    _criterion(
        5,
        ok,
        f"backup-only flows from {count} in-set starts: sampled barrier min "
        f"{min_along:.4f}, backup margin at horizon {min_terminal:.4f} "
        f"(both >=-1e-6), {elapsed:.1f} s",
    )


def test_criterion_06_set_inclusions(pendulum_bundle):
    started = time.perf_counter()
    b = pendulum_bundle
    cfg = b.barrier_cfg
    rng = np.random.default_rng(606)
    pts = rng.uniform(-np.pi, np.pi, size=(10_000, 2))
    states = propagate_states(b.field, pts, cfg.n_samples, cfg.t_sample, cfg.substeps)
    z = flow_margins(b.safety, b.backup, states)
    hbar = z.min(axis=0)
    h = softmin(cfg.rho, z, axis=0)
    h_s = np.asarray(b.safety.h_s(pts))
    h_b = np.asarray(b.backup.h_b(pts))
    v1 = int(np.sum(~(hbar[h >= 0.0] > 0.0)))
    v2 = int(np.sum(~(h_s[hbar >= 0.0] >= 0.0)))
    v3 = int(np.sum(~(hbar[h_b >= 0.0] >= 0.0)))
    n_b = int(np.sum(h_b >= 0.0))
    elapsed = time.perf_counter() - started
    ok = v1 == 0 and v2 == 0 and v3 == 0 and n_b > 0 and elapsed < 30.0
    _criterion(
        6,
        ok,
        f"set inclusions on 10000 states: violations {v1}/{v2}/{v3} (all 0), "
        f"{n_b} samples inside the backup set, {elapsed:.1f} s",
    )


def test_criterion_07_robot_experiment(robot_result):
    res = robot_result
    cfg = res.config
    ok_adm = True
    ok_hs = True
    ok_goal = True
    ok_settle = True
    details = []
    from softbarrier.experiments import build_bundle

    bundle = build_bundle(cfg)
    for rr in res.runs:
        log = rr.log
        ok_adm &= bool(np.all(np.abs(log.controls) <= 1.0 + 1e-9))
        ok_hs &= bool(log.h_s.min() >= -1e-6)
        goal = np.asarray(cfg["runs"][rr.index]["goal"], dtype=float)
        dist = float(np.linalg.norm(log.states[-1][:2] - goal[:2]))
        ok_goal &= dist <= 0.05
        u_d_fn = bundle.desired_control(goal)
        ud = np.array([u_d_fn(t, s) for t, s in zip(log.t, log.states)])
        settled = np.array(
            [m == MODE_QP for m in log.modes]
        ) & np.all(np.abs(log.controls - ud) <= 1e-9, axis=1)
        not_settled = np.where(~settled)[0]
        settle_tick = int(not_settled[-1]) + 1 if not_settled.size else 0
        ok_settle &= settle_tick < len(log) - 1 and bool(settled[settle_tick:].all())
        details.append(f"goal {goal[:2].tolist()}: dist {dist:.4f}, settles at t={log.t[min(settle_tick, len(log)-1)]:.2f}")
    elapsed = res.config["__wall"]
    ok = ok_adm and ok_hs and ok_goal and ok_settle and elapsed < 120.0
    _criterion(
        7,
        ok,
        f"robot runs ({'; '.join(details)}); admissible {ok_adm}, safe {ok_hs}, "
        f"converged {ok_goal}, settled to projection mode with u = u_d {ok_settle}, "
        f"{elapsed:.1f} s",
    )


def test_criterion_08_continuity_at_gate_boundary(pendulum_bundle):
    started = time.perf_counter()
    b = pendulum_bundle
    cfg = b.barrier_cfg
    from softbarrier.controller import ControllerConfig, filter_control

    ctrl = ControllerConfig(barrier=cfg, poly=b.poly)

    def gate_value(x):
        ev = evaluate_barrier(b.system, b.backup, b.safety, cfg, x, field=b.field)
        beta = feasibility_metric(ev, cfg.alpha, cfg.epsilon, b.poly)
        return min(ev.h - cfg.epsilon, beta)

    rng = np.random.default_rng(808)
    segments = 0
    worst_jump = 0.0
    attempts = 0
    while segments < 20 and attempts < 200:
        attempts += 1
        a = rng.uniform(-2.6, 2.6, size=2)
        c = rng.uniform(-2.6, 2.6, size=2)
        ga, gc = gate_value(a), gate_value(c)
        if ga * gc >= 0.0:
            continue
        if ga > 0.0:
            a, c = c, a
        while np.linalg.norm(c - a) > 1e-6:
            mid = 0.5 * (a + c)
            if gate_value(mid) < 0.0:
                a = mid
            else:
                c = mid
        u_neg = filter_control(b.system, b.backup, b.safety, ctrl, a, np.zeros(1), field=b.field).u
        u_pos = filter_control(b.system, b.backup, b.safety, ctrl, c, np.zeros(1), field=b.field).u
        worst_jump = max(worst_jump, float(np.linalg.norm(u_pos - u_neg)))
        segments += 1
    elapsed = time.perf_counter() - started
    ok = segments == 20 and worst_jump <= 1e-3 and elapsed < 30.0
    _criterion(
        8,
        ok,
        f"gate-boundary continuity on {segments} bisected segments: worst control "
        f"jump {worst_jump:.2e} (<=1e-3 across 1e-6 state gaps), {elapsed:.1f} s",
    )


def test_criterion_09_determinism(pendulum_result, tmp_path):
    cfg = load_config("configs/pendulum.yaml")
    rerun = run_experiment(cfg, out_dir=tmp_path, quiet=True)
    identical = True
    for rr in pendulum_result.runs:
        first = rr.csv_path.read_bytes()
        second = (tmp_path / rr.csv_path.name).read_bytes()
        identical &= first == second
    _criterion(
        9,
        identical and len(rerun.runs) == len(pendulum_result.runs),
        f"re-running the pendulum sweep reproduced {len(rerun.runs)} CSVs byte-for-byte",
    )
