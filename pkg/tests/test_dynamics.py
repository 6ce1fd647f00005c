import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inspection_rta.constraints import fft_position
from inspection_rta.dynamics import (
    ControlInput,
    NonFiniteState,
    SimState,
    attitude_deriv,
    quat_from_axis_angle,
    quat_mul,
    quat_rotate,
    quat_to_dcm,
    step_rk4,
    translational_deriv,
)

N = 0.001027

unit_quats = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 1e-3)
vec3 = st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3)


def _q(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _fly(state, u, dt, steps):
    for _ in range(steps):
        state = step_rk4(state, u, dt)
    return state


def test_rotate_identity():
    assert np.allclose(quat_rotate([0, 0, 0, 1], [1, 2, 3]), [1, 2, 3], atol=0)


def test_rotate_quarter_turn_about_z():
    s = math.sqrt(0.5)
    assert np.allclose(quat_rotate([0, 0, s, s], [1, 0, 0]), [0, 1, 0], atol=1e-15)


@given(unit_quats)
def test_rotate_zero_vector(q):
    assert np.array_equal(quat_rotate(_q(q), np.zeros(3)), np.zeros(3))


@given(unit_quats, vec3)
def test_rotate_matches_dcm_and_preserves_norm(q, p):
    q, p = _q(q), np.asarray(p)
    r = quat_rotate(q, p)
    R = quat_to_dcm(q)
    # independent rotation-matrix oracle for a unit scalar-last quaternion
    x, y, z, w = q
    R_ref = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
    scale = 1 + np.linalg.norm(p)
    assert np.allclose(R, R_ref, atol=1e-14)
    assert np.allclose(r, R_ref @ p, atol=1e-12 * scale)
    assert abs(np.linalg.norm(r) - np.linalg.norm(p)) <= 1e-12 * scale


@given(unit_quats, unit_quats, vec3)
def test_hamilton_product_composes_rotations(a, b, p):
    a, b = _q(a), _q(b)
    lhs = quat_rotate(quat_mul(a, b), p)
    rhs = quat_rotate(a, quat_rotate(b, p))
    assert np.allclose(lhs, rhs, atol=1e-10 * (1 + np.linalg.norm(p)))


def test_attitude_equilibrium():
    qd, wd = attitude_deriv(SimState(), np.zeros(3))
    assert np.array_equal(qd, np.zeros(4)) and np.array_equal(wd, np.zeros(3))


def test_attitude_spin_rate():
    qd, wd = attitude_deriv(SimState(w=[0.1, 0, 0]), np.zeros(3))
    assert np.allclose(qd, [0.05, 0, 0, 0], atol=1e-16)
    assert np.allclose(wd, 0, atol=1e-16)


def test_attitude_torque():
    _, wd = attitude_deriv(SimState(), [0.001, 0, 0])
    assert np.allclose(wd, [0.001 / 0.0573, 0, 0], rtol=1e-14)
    assert abs(wd[0] - 0.017452) < 1e-6


def test_translational_cases():
    assert np.allclose(translational_deriv(SimState(), np.zeros(3)), 0)
    a = translational_deriv(SimState(p=[100, 0, 0]), np.zeros(3))
    assert np.allclose(a, [3 * N**2 * 100, 0, 0], rtol=1e-14, atol=1e-18)
    assert abs(a[0] - 3.164e-4) < 1e-6
    assert np.allclose(translational_deriv(SimState(), [1, 0, 0]), [1 / 12, 0, 0], rtol=1e-14)


def test_thrust_rotates_with_attitude():
    q = quat_from_axis_angle([0, 0, 1], math.pi / 2)
    a = translational_deriv(SimState(q=q), [1, 0, 0])
    assert np.allclose(a, quat_rotate(q, [1, 0, 0]) / 12, atol=1e-16)


def test_rk4_equilibrium_only_clock_and_environment_move():
    s0 = SimState(T=5.0, E=6.0, theta_S=1.0)
    s1 = step_rk4(s0, ControlInput(), 1.0)
    assert np.array_equal(s1.p, s0.p) and np.array_equal(s1.v, s0.v) and np.array_equal(s1.w, s0.w)
    assert np.allclose(s1.q, s0.q, atol=1e-15)
    assert s1.t == 1.0
    assert abs(s1.theta_S - (1.0 - N)) < 1e-12
    assert s1.T != s0.T and s1.E != s0.E


def test_rk4_matches_closed_form_free_flight():
    s = _fly(SimState(p=[100, 0, 0]), ControlInput(), 1.0, 500)
    assert np.abs(s.p - fft_position([100, 0, 0], [0, 0, 0], 500.0)).max() < 1e-6


def test_rk4_pure_spin_angle():
    s = _fly(SimState(w=[0, 0, 0.01]), ControlInput(), 1.0, 100)
    angle = 2 * math.atan2(s.q[2], s.q[3])
    assert abs(angle - 1.0) < 1e-8
    assert abs(np.linalg.norm(s.q) - 1) < 1e-9


def test_rk4_spin_rate_constant():
    s = SimState(w=[0.01, -0.02, 0.005])
    w0 = np.linalg.norm(s.w)
    s = _fly(s, ControlInput(), 1.0, 1000)
    assert abs(np.linalg.norm(s.w) - w0) < 1e-10


def test_rk4_quaternion_norm_every_step(rng):
    s = SimState(q=_q(rng.normal(size=4)), w=[0.02, 0.01, -0.03])
    u = ControlInput(tau=[1e-3, -1e-3, 5e-4])
    for _ in range(500):
        s = step_rk4(s, u, 1.0)
        assert abs(np.linalg.norm(s.q) - 1) < 1e-9


def test_rk4_fourth_order():
    p0, v0 = np.array([400.0, -300.0, 200.0]), np.array([1.0, -2.0, 0.5])
    exact = fft_position(p0, v0, 500.0)
    e1 = np.abs(_fly(SimState(p=p0, v=v0), ControlInput(), 1.0, 500).p - exact).max()
    e05 = np.abs(_fly(SimState(p=p0, v=v0), ControlInput(), 0.5, 1000).p - exact).max()
    assert 8 <= e1 / e05 <= 32


def test_rk4_rejects_bad_dt_and_non_finite():
    with pytest.raises(ValueError):
        step_rk4(SimState(), ControlInput(), 0.0)
    with pytest.raises(NonFiniteState):
        step_rk4(SimState(v=[np.inf, 0, 0]), ControlInput(), 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2 * math.pi))
def test_sun_angle_wrapped(th):
    s = step_rk4(SimState(theta_S=th), ControlInput(), 1.0)
    assert 0 <= s.theta_S < 2 * math.pi
