"""Quaternion algebra, 6-DoF relative motion and the fixed-step RK4 integrator.

Quaternions are scalar-last ``[q1, q2, q3, q4]`` with the Hamilton product. The attitude
quaternion rotates body-frame vectors into the Hill frame, ``v_hill = q v_body q*``, so
``quat_rotate(q, v)`` maps body to Hill and ``quat_rotate(quat_conj(q), v)`` maps Hill to
body. Thrust is commanded in the body frame and rotated with the same map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import _layout as L
from .thermal import KELVIN, _edot, _heat

__all__ = [
    "NonFiniteState",
    "SimState",
    "ControlInput",
    "quat_mul",
    "quat_conj",
    "quat_rotate",
    "quat_to_dcm",
    "quat_from_axis_angle",
    "attitude_deriv",
    "translational_deriv",
    "state_deriv",
    "step_rk4",
]

TWO_PI = 2.0 * math.pi


class NonFiniteState(FloatingPointError):
    """Raised when integration produces NaN or inf."""


# ---------------------------------------------------------------- compiled kernels


@njit(cache=True)
def _qmul(a, b):
    out = np.empty(4)
    out[0] = a[3] * b[0] + b[3] * a[0] + a[1] * b[2] - a[2] * b[1]
    out[1] = a[3] * b[1] + b[3] * a[1] + a[2] * b[0] - a[0] * b[2]
    out[2] = a[3] * b[2] + b[3] * a[2] + a[0] * b[1] - a[1] * b[0]
    out[3] = a[3] * b[3] - a[0] * b[0] - a[1] * b[1] - a[2] * b[2]
    return out


@njit(cache=True)
def _dcm(q):
    """Rotation matrix of q (body -> Hill)."""
    x, y, z, w = q[0], q[1], q[2], q[3]
    R = np.empty((3, 3))
    R[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[0, 1] = 2.0 * (x * y - z * w)
    R[0, 2] = 2.0 * (x * z + y * w)
    R[1, 0] = 2.0 * (x * y + z * w)
    R[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[1, 2] = 2.0 * (y * z - x * w)
    R[2, 0] = 2.0 * (x * z - y * w)
    R[2, 1] = 2.0 * (y * z + x * w)
    R[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


@njit(cache=True)
def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


@njit(cache=True)
def _wdot(w, tau, P):
    J1, J2, J3 = P[L.P_J1], P[L.P_J2], P[L.P_J3]
    out = np.empty(3)
    out[0] = ((J2 - J3) * w[1] * w[2] + tau[0]) / J1
    out[1] = ((J3 - J1) * w[2] * w[0] + tau[1]) / J2
    out[2] = ((J1 - J2) * w[0] * w[1] + tau[2]) / J3
    return out


@njit(cache=True)
def _qdot(q, w):
    out = np.empty(4)
    out[0] = 0.5 * (q[3] * w[0] - q[2] * w[1] + q[1] * w[2])
    out[1] = 0.5 * (q[2] * w[0] + q[3] * w[1] - q[0] * w[2])
    out[2] = 0.5 * (-q[1] * w[0] + q[0] * w[1] + q[3] * w[2])
    out[3] = 0.5 * (-q[0] * w[0] - q[1] * w[1] - q[2] * w[2])
    return out


@njit(cache=True)
def _cw_accel(p, v, n):
    out = np.empty(3)
    out[0] = 3.0 * n * n * p[0] + 2.0 * n * v[1]
    out[1] = -2.0 * n * v[0]
    out[2] = -n * n * p[2]
    return out


@njit(cache=True)
def _deriv(x, u, P, out):
    """Time derivative of the packed state (the clock entry gets 1)."""
    p = x[L.X_P : L.X_P + 3]
    v = x[L.X_V : L.X_V + 3]
    q = x[L.X_Q : L.X_Q + 4]
    w = x[L.X_W : L.X_W + 3]
    R = _dcm(q)
    n = P[L.P_N]
    m = P[L.P_M]
    a = _cw_accel(p, v, n)
    for i in range(3):
        out[L.X_P + i] = v[i]
        out[L.X_V + i] = a[i] + (R[i, 0] * u[0] + R[i, 1] * u[1] + R[i, 2] * u[2]) / m
    qd = _qdot(q, w)
    for i in range(4):
        out[L.X_Q + i] = qd[i]
    wd = _wdot(w, u[3:6], P)
    for i in range(3):
        out[L.X_W + i] = wd[i]
    th = x[L.X_SUN]
    s0, s1 = math.cos(th), math.sin(th)
    # thermal node normal and panel normal in Hill
    nb0, nb1, nb2 = P[L.P_TH_NX], P[L.P_TH_NY], P[L.P_TH_NZ]
    nh0 = R[0, 0] * nb0 + R[0, 1] * nb1 + R[0, 2] * nb2
    nh1 = R[1, 0] * nb0 + R[1, 1] * nb1 + R[1, 2] * nb2
    cos_sun = nh0 * s0 + nh1 * s1
    cos_earth = -nh0
    TK = x[L.X_T] + KELVIN
    out[L.X_T] = _heat(TK, cos_sun, cos_earth, P) / (P[L.P_TH_MN] * P[L.P_TH_CP])
    pb0, pb1, pb2 = P[L.P_PW_NX], P[L.P_PW_NY], P[L.P_PW_NZ]
    ph0 = R[0, 0] * pb0 + R[0, 1] * pb1 + R[0, 2] * pb2
    ph1 = R[1, 0] * pb0 + R[1, 1] * pb1 + R[1, 2] * pb2
    out[L.X_E] = _edot(ph0 * s0 + ph1 * s1, P)
    out[L.X_SUN] = -n
    out[L.X_TIME] = 1.0


@njit(cache=True)
def _rk4(x, u, dt, P):
    """One RK4 step; returns the new packed state (quaternion renormalised, Sun angle wrapped)."""
    nx = x.shape[0]
    k1 = np.empty(nx)
    k2 = np.empty(nx)
    k3 = np.empty(nx)
    k4 = np.empty(nx)
    tmp = np.empty(nx)
    _deriv(x, u, P, k1)
    for i in range(nx):
        tmp[i] = x[i] + 0.5 * dt * k1[i]
    _deriv(tmp, u, P, k2)
    for i in range(nx):
        tmp[i] = x[i] + 0.5 * dt * k2[i]
    _deriv(tmp, u, P, k3)
    for i in range(nx):
        tmp[i] = x[i] + dt * k3[i]
    _deriv(tmp, u, P, k4)
    out = np.empty(nx)
    for i in range(nx):
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    qn = math.sqrt(out[6] ** 2 + out[7] ** 2 + out[8] ** 2 + out[9] ** 2)
    for i in range(4):
        out[L.X_Q + i] /= qn
    th = out[L.X_SUN] % TWO_PI
    if th >= TWO_PI:
        th = 0.0
    out[L.X_SUN] = th
    # keep the clock exact on the grid
    out[L.X_TIME] = x[L.X_TIME] + dt
    return out


@njit(cache=True)
def _all_finite(x):
    for i in range(x.shape[0]):
        if not np.isfinite(x[i]):
            return False
    return True


# ---------------------------------------------------------------- value types


def _vec(a, n):
    arr = np.array(a, dtype=float).reshape(n)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SimState:
    """Full simulation state.

    Attributes
    ----------
    p, v : ndarray
        Hill-frame relative position [m] and velocity [m/s].
    q : ndarray
        Scalar-last attitude quaternion (body to Hill).
    w : ndarray
        Body angular velocity [rad/s].
    T : float
        Tracked node temperature [deg C].
    E : float
        Battery energy [kJ].
    theta_S : float
        Sun angle [rad], kept in [0, 2 pi).
    t : float
        Simulation clock [s].
    """

    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))
    w: np.ndarray = field(default_factory=lambda: np.zeros(3))
    T: float = 5.0
    E: float = 6.0
    theta_S: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "p", _vec(self.p, 3))
        object.__setattr__(self, "v", _vec(self.v, 3))
        object.__setattr__(self, "q", _vec(self.q, 4))
        object.__setattr__(self, "w", _vec(self.w, 3))
        for k in ("T", "E", "theta_S", "t"):
            object.__setattr__(self, k, float(getattr(self, k)))

    def to_array(self) -> np.ndarray:
        x = np.empty(L.NX)
        x[L.X_P : L.X_P + 3] = self.p
        x[L.X_V : L.X_V + 3] = self.v
        x[L.X_Q : L.X_Q + 4] = self.q
        x[L.X_W : L.X_W + 3] = self.w
        x[L.X_T] = self.T
        x[L.X_E] = self.E
        x[L.X_SUN] = self.theta_S
        x[L.X_TIME] = self.t
        return x

    @classmethod
    def from_array(cls, x) -> "SimState":
        x = np.asarray(x, dtype=float)
        return cls(
            p=x[0:3], v=x[3:6], q=x[6:10], w=x[10:13], T=x[13], E=x[14], theta_S=x[15], t=x[16]
        )


@dataclass(frozen=True)
class ControlInput:
    """Body-frame thrust ``F`` [N] and wheel torque ``tau`` [N m]."""

    F: np.ndarray = field(default_factory=lambda: np.zeros(3))
    tau: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "F", _vec(self.F, 3))
        object.__setattr__(self, "tau", _vec(self.tau, 3))

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.F, self.tau])

    @classmethod
    def from_array(cls, u) -> "ControlInput":
        u = np.asarray(u, dtype=float)
        return cls(F=u[:3], tau=u[3:6])


# ---------------------------------------------------------------- public functions


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product ``a (x) b`` of scalar-last quaternions."""
    return _qmul(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def quat_conj(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.array([-q[0], -q[1], -q[2], q[3]])


def quat_rotate(q, p) -> np.ndarray:
    """Rotate a 3-vector by q: the vector part of ``q [p, 0] q*``."""
    qp = quat_mul(q, np.append(np.asarray(p, dtype=float), 0.0))
    return quat_mul(qp, quat_conj(q))[:3]


def quat_to_dcm(q) -> np.ndarray:
    """Rotation matrix equal to ``quat_rotate(q, .)``."""
    return _dcm(np.asarray(q, dtype=float))


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.append(axis * math.sin(angle / 2), math.cos(angle / 2))


def attitude_deriv(state: SimState, tau, model=None) -> tuple[np.ndarray, np.ndarray]:
    """Quaternion rate and body angular acceleration under wheel torque ``tau``."""
    P = L.resolve(model).P
    qd = _qdot(state.q, state.w)
    wd = _wdot(state.w, np.asarray(tau, dtype=float), P)
    return qd, wd


def translational_deriv(state: SimState, F, model=None) -> np.ndarray:
    """Hill-frame acceleration: CW drift plus body thrust rotated into Hill over mass."""
    P = L.resolve(model).P
    a = _cw_accel(state.p, state.v, P[L.P_N])
    return a + _dcm(state.q) @ np.asarray(F, dtype=float) / P[L.P_M]


def state_deriv(state: SimState, u: ControlInput, model=None) -> np.ndarray:
    """Packed time derivative of the full state."""
    P = L.resolve(model).P
    out = np.empty(L.NX)
    _deriv(state.to_array(), u.to_array(), P, out)
    return out


def step_rk4(state: SimState, u: ControlInput, dt: float, model=None) -> SimState:
    """Advance ``dt`` seconds with zero-order-hold control."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    P = L.resolve(model).P
    x = _rk4(state.to_array(), u.to_array(), float(dt), P)
    if not _all_finite(x):
        raise NonFiniteState(f"non-finite state after step at t={state.t}")
    return SimState.from_array(x)
