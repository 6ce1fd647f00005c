import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import solve_continuous_are

from inspection_rta import _layout as L
from inspection_rta.config import LqrParams, PdParams
from inspection_rta.controllers import (
    LqrPdPolicy,
    RandomPolicy,
    ZeroPolicy,
    cw_system,
    lqr_gain,
    pd_attitude,
    solve_care,
    sun_target_quaternion,
)
from inspection_rta.dynamics import SimState, quat_from_axis_angle, quat_rotate
from inspection_rta.env import run_episode


def test_double_integrator_gain():
    A, B = cw_system(0.0, 1.0)
    P, K = solve_care(A, B, np.eye(6), np.eye(3))
    expect = np.hstack([np.eye(3), math.sqrt(3) * np.eye(3)])
    assert np.abs(K - expect).max() < 1e-6


def test_care_matches_library_solver(model):
    A, B = cw_system(model.P[L.P_N], model.P[L.P_M])
    rng = np.random.default_rng(0)
    for _ in range(10):
        M = rng.normal(size=(6, 6))
        Q = M @ M.T + 1e-3 * np.eye(6)
        R = np.diag(rng.uniform(0.5, 200, 3))
        P, K = solve_care(A, B, Q, R)
        Pr = solve_continuous_are(A, B, Q, R)
        assert np.abs(P - Pr).max() <= 1e-8 * max(1.0, np.abs(Pr).max())


def test_default_gain_stable_and_residual(model):
    A, B = cw_system(model.P[L.P_N], model.P[L.P_M])
    p = LqrParams()
    Q = np.diag([p.Q_pos] * 3 + [p.Q_vel] * 3)
    R = p.R * np.eye(3)
    P, K = solve_care(A, B, Q, R)
    assert np.abs(K - lqr_gain(p, model)).max() == 0.0
    assert np.max(np.linalg.eigvals(A - B @ K).real) < 0
    res = A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T) @ P + Q
    assert np.linalg.norm(res) < 1e-8


def test_pd_zero_at_target():
    q = quat_from_axis_angle([0.3, -0.2, 0.9], 1.1)
    tau = pd_attitude(SimState(q=q), PdParams(), target_q=q)
    assert np.all(tau == 0.0)


def test_pd_small_angle():
    kp = 0.02
    for axis in np.eye(3):
        th = 1e-3
        s = SimState(q=quat_from_axis_angle(axis, th))
        tau = pd_attitude(s, PdParams(kp=kp), target_q=np.array([0, 0, 0, 1.0]))
        assert np.abs(tau + kp * th / 2 * axis).max() < 1e-9 * kp


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 0.1),
    st.lists(st.floats(-0.05, 0.05), min_size=3, max_size=3),
)
def test_pd_sign_flip_and_box(q, w):
    q = np.array(q) / np.linalg.norm(q)
    tgt = quat_from_axis_angle([0, 0, 1], 0.7)
    a = pd_attitude(SimState(q=q, w=w), PdParams(), target_q=tgt)
    b = pd_attitude(SimState(q=-q, w=w), PdParams(), target_q=tgt)
    c = pd_attitude(SimState(q=q, w=w), PdParams(), target_q=-tgt)
    assert np.array_equal(a, b) and np.array_equal(a, c)
    assert np.all(np.abs(a) <= 1e-3)


def test_sun_target_points_boresight_at_sun():
    for th in np.linspace(0, 2 * math.pi, 13):
        b = quat_rotate(sun_target_quaternion(th), [1.0, 0, 0])
        assert np.allclose(b, [math.cos(th), math.sin(th), 0.0], atol=1e-15)


def test_lqr_pd_output_in_box(model):
    pol = LqrPdPolicy(model=model)
    rng = np.random.default_rng(1)
    for _ in range(100):
        q = rng.normal(size=4)
        s = SimState(p=rng.normal(size=3) * 300, v=rng.normal(size=3), q=q / np.linalg.norm(q), w=rng.normal(size=3) * 0.1)
        pol.reset(s)
        u = pol(s)
        assert np.all(np.abs(u[:3]) <= 1.0) and np.all(np.abs(u[3:]) <= 1e-3)


def test_lqr_pd_without_filter_violates(model):
    tr = run_episode(LqrPdPolicy(model=model), model, seed=0, rta=False, max_policy_steps=200)
    assert tr.t[-1] <= 2000.0
    assert np.any(tr.h < 0)


def test_scripted_policies(model):
    s = SimState(p=[100, 0, 0])
    assert np.all(ZeroPolicy()(s) == 0.0)
    a, b = RandomPolicy(3, model), RandomPolicy(3, model)
    for _ in range(10):
        ua, ub = a(s), b(s)
        assert np.array_equal(ua, ub)
        assert np.all(np.abs(ua[:3]) <= 1.0) and np.all(np.abs(ua[3:]) <= 1e-3)


def test_non_controllable_pair_rejected():
    from inspection_rta.controllers import RiccatiDivergence

    A = np.eye(2)
    B = np.zeros((2, 1))
    with pytest.raises((RiccatiDivergence, np.linalg.LinAlgError)):
        solve_care(A, B, np.eye(2), np.eye(1))
