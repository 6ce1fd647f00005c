import math

import numpy as np
import pytest

from inspection_rta import _layout as L
from inspection_rta.asif import AsifFilter, NonFiniteInput, QpProblem, assemble, solve
from inspection_rta.constraints import barrier_rows
from inspection_rta.dynamics import SimState, quat_from_axis_angle
from inspection_rta.qp import kkt_residuals, solve_qp
from oracles import (
    box_limits,
    deep_interior_pair,
    dual_active_set_qp,
    envelope_state,
    scaled_kkt_report,
    synthetic_filter_qp,
)


def _problem(H, f, G, g):
    return QpProblem(H, f, G, g, {}, (), np.zeros(6))


def test_no_constraints_zero_desired(model):
    qp = assemble(SimState(p=[100, 0, 0]), np.zeros(6), specs=[], model=model)
    assert qp.n_vars == 6 and qp.G.shape[0] == 12
    sol = solve(qp, model)
    assert sol.status == "Optimal"
    assert np.allclose(sol.u_act.to_array(), 0.0, atol=1e-12)
    assert sol.slacks == {}


def test_decision_layout_and_slack_weights(model):
    # inbound and rotating, so every row has control authority
    s = SimState(p=[60, 30, -20], v=[-0.3, -0.2, 0.1], q=quat_from_axis_angle([1, 1, 0], 0.4), w=[0.01, -0.01, 0.02])
    qp = assemble(s, np.zeros(6), model=model)
    assert qp.n_vars == 6 + 12
    assert "Collision" not in qp.slack_index_map
    assert sorted(qp.slack_index_map.values()) == list(range(6, 18))
    assert np.all(np.diag(qp.H)[6:] == 2e12)
    assert np.all(np.diag(qp.H)[:6] == 2.0)
    assert qp.G.shape[0] == 13 + 12 and qp.row_ids[-12:] == ("box",) * 12


def test_box_only_projection_returns_desired():
    lim = np.array([1, 1, 1, 1e-3, 1e-3, 1e-3])
    ud = np.array([0.3, -0.2, 0.9, 5e-4, -1e-4, 0.0])
    A = np.vstack([np.eye(6), -np.eye(6)])
    l = -np.concatenate([lim, lim])
    r = solve_qp(2 * np.eye(6), -2 * ud, A, l, np.full(12, np.inf))
    assert r.status == "Optimal"
    assert np.abs(r.x - ud).max() < 1e-9


def test_single_active_row_1d():
    r = solve_qp(np.array([[2.0]]), np.array([-2.0]), np.array([[-1.0]]), np.array([0.0]), np.array([np.inf]))
    assert r.status == "Optimal"
    assert abs(r.x[0]) < 1e-9


def test_random_6d_qps_with_five_active_rows(rng):
    for _ in range(100):
        M = rng.normal(size=(6, 6))
        H = M @ M.T + 6 * np.eye(6)
        x_star = rng.normal(size=6)
        A = rng.normal(size=(8, 6))
        lam = np.zeros(8)
        lam[:5] = rng.uniform(0.1, 2.0, 5)
        b = A @ x_star
        b[5:] -= rng.uniform(0.1, 1.0, 3)
        f = A.T @ lam - H @ x_star
        r = solve_qp(H, f, A, b, np.full(8, np.inf))
        x_o, _ = dual_active_set_qp(H, f, A, b)
        assert np.abs(x_o - x_star).max() < 1e-9
        assert r.status == "Optimal"
        assert np.abs(r.x - x_star).max() < 1e-5


def test_filter_shaped_qps_against_oracle(model, rng):
    for _ in range(100):
        H, f, G, g = synthetic_filter_qp(rng, model)
        sol = solve(_problem(H, f, G, g), model)
        x_o, _ = dual_active_set_qp(H, f, G, g)
        assert sol.status == "Optimal"
        assert np.abs(sol.z[:6] - x_o[:6]).max() < 1e-5
        assert max(scaled_kkt_report(H, f, G, g, sol.z, -sol.y)) < 1e-5


def test_own_kkt_residuals_agree_with_independent_report(model, rng):
    H, f, G, g = synthetic_filter_qp(rng, model, weight=10.0)
    sol = solve(_problem(H, f, G, g), model)
    prim, dual, comp = kkt_residuals(H, f, G, g, np.full(len(g), np.inf), sol.z, sol.y)
    from oracles import kkt_report

    p2, d2, c2 = kkt_report(H, f, G, g, sol.z, -sol.y)
    assert abs(prim - p2) < 1e-12 and abs(dual - d2) < 1e-12


def test_slack_monotone_in_weight(model):
    for seed in range(60):
        sl = []
        for w in (1e2, 1e3, 1e12, 1e13):
            H, f, G, g = synthetic_filter_qp(np.random.default_rng(seed), model, weight=w)
            x, _ = dual_active_set_qp(H, f, G, g)
            sl.append(np.abs(x[6:]))
        for a, b in zip(sl, sl[1:]):
            assert np.all(b <= a * (1 + 1e-9) + 1e-15)


def test_total_slack_penalty_monotone_in_weight(model):
    for seed in range(60):
        tot = []
        for w in (1e2, 1e3, 1e12, 1e13):
            H, f, G, g = synthetic_filter_qp(np.random.default_rng(seed), model, weight=w)
            x, _ = dual_active_set_qp(H, f, G, g)
            tot.append(float(np.sum(x[6:] ** 2)))
        for a, b in zip(tot, tot[1:]):
            assert b <= a * (1 + 1e-9) + 1e-30


def test_hard_row_satisfied_on_optimal_solves(model, rng):
    for _ in range(200):
        H, f, G, g = synthetic_filter_qp(rng, model)
        sol = solve(_problem(H, f, G, g), model)
        hard = [i for i in range(G.shape[0] - 12) if not np.any(G[i, 6:])]
        if sol.status == "Optimal":
            u = sol.u_act.to_array()
            for i in hard:
                assert G[i, :6] @ u - g[i] >= -1e-6


def test_solve_is_deterministic(model, rng):
    H, f, G, g = synthetic_filter_qp(rng, model)
    a = solve(_problem(H, f, G, g), model)
    b = solve(_problem(H, f, G, g), model)
    assert np.array_equal(a.z, b.z) and np.array_equal(a.y, b.y)


def test_filter_interior_is_identity(model, rng):
    f = AsifFilter(model)
    for _ in range(200):
        x, u, _ = deep_interior_pair(rng, model)
        ua, rep = f.filter(x, u)
        assert np.abs(ua.to_array() - u).max() < 1e-9
        assert not rep.modified and rep.status == "Optimal"


def test_filter_speed_boundary(model):
    # on the speed boundary moving radially outward, asking for more outward thrust
    p = np.array([80.0, 0, 0])
    vmax = 0.2 + 7.5 * 0.001027 * 80
    s = SimState(p=p, v=[vmax, 0, 0])
    f = AsifFilter(model)
    ud = np.array([1.0, 0, 0, 0, 0, 0])
    ua, rep = f.filter(s, ud)
    G, aff, *_ = barrier_rows(s, model)
    assert G[L.C_SPEED] @ ud + aff[L.C_SPEED] < 0
    assert G[L.C_SPEED] @ ua.to_array() + aff[L.C_SPEED] >= -1e-6
    assert ua.F[0] < ud[0] and rep.modified


def test_filter_conflict_relaxes_but_keeps_separation(model):
    # battery near its floor with the node near its temperature limit
    x = np.array([
        -19.555893, -28.401826, 37.921249, -0.144508, -0.343103, -0.027783,
        -0.534231, 0.740882, 0.195137, 0.357228, -0.016787, -0.015086, 0.015007,
        9.684232, 1.078311, 3.017432, 0.0,
    ])
    x[6:10] /= np.linalg.norm(x[6:10])
    ua, rep = AsifFilter(model).filter(x, np.zeros(6))
    assert rep.status == "Optimal"
    assert rep.bc[L.C_COLLISION] >= -1e-6
    assert rep.relaxed and rep.relaxation[L.C_BATT] > 1e-3
    assert rep.relaxation[L.C_COLLISION] == 0.0


def test_filter_rejects_non_finite(model):
    with pytest.raises(NonFiniteInput):
        AsifFilter(model).filter(SimState(p=[100, 0, 0]), [np.nan, 0, 0, 0, 0, 0])


def test_filter_output_in_box(model, rng):
    f = AsifFilter(model)
    lim = box_limits(model)
    for _ in range(200):
        x = envelope_state(rng)
        ua, rep = f.filter(x, rng.uniform(-3, 3, 6) * lim)
        assert np.all(np.abs(ua.to_array()) <= lim)
        assert rep.bc[L.C_COLLISION] >= -1e-6 or rep.status != "Optimal"
