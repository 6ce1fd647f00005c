"""Classical primary controllers and scripted policies.

The LQR drives translation with a Hill-frame force that is rotated into the body frame
and clamped to the thrust box; the PD law drives attitude toward a target quaternion.
Policies map ``(state, obs)`` to a 6-vector ``[F, tau]``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from . import _layout as L
from .config import LqrParams, PdParams, RunConfig
from .dynamics import SimState, quat_conj, quat_mul, quat_to_dcm

__all__ = [
    "RiccatiDivergence",
    "cw_system",
    "solve_care",
    "lqr_gain",
    "pd_attitude",
    "sun_target_quaternion",
    "LqrPdPolicy",
    "ZeroPolicy",
    "RandomPolicy",
]


class RiccatiDivergence(RuntimeError):
    pass


def cw_system(n: float, m: float) -> tuple[np.ndarray, np.ndarray]:
    """Linear relative-motion model ``xdot = A x + B F`` with Hill-frame force F."""
    A = np.zeros((6, 6))
    A[0:3, 3:6] = np.eye(3)
    A[3, 0] = 3 * n**2
    A[3, 4] = 2 * n
    A[4, 3] = -2 * n
    A[5, 2] = -(n**2)
    B = np.zeros((6, 3))
    B[3:6, :] = np.eye(3) / m
    return A, B


def _stabilizing_seed(A, B, R):
    """A gain with Hurwitz closed loop, found by solving a shifted Lyapunov problem."""
    # Bass' method: for beta above the largest real part of -A, the gain
    # K = R^-1 B' X^-1 with (A + beta I) X + X (A + beta I)' = 2 B R^-1 B' stabilises.
    beta = 1.0 + np.max(np.abs(np.linalg.eigvals(A)))
    Rinv = np.linalg.inv(R)
    Ab = A + beta * np.eye(A.shape[0])
    X = solve_continuous_lyapunov(Ab, 2 * B @ Rinv @ B.T)
    try:
        return Rinv @ B.T @ np.linalg.inv(X)
    except np.linalg.LinAlgError as exc:
        raise RiccatiDivergence("system is not controllable from the seed construction") from exc


def solve_care(A, B, Q, R, tol: float = 1e-12, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Continuous algebraic Riccati equation by Newton (Kleinman) iteration.

    Returns ``(P, K)`` with ``K = R^-1 B' P``.
    """
    A, B, Q, R = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (A, B, Q, R))
    Rinv = np.linalg.inv(R)
    K = _stabilizing_seed(A, B, R)
    P_prev = None
    for _ in range(max_iter):
        Acl = A - B @ K
        if np.max(np.linalg.eigvals(Acl).real) >= 0:
            raise RiccatiDivergence("closed loop lost stability during iteration")
        P = solve_continuous_lyapunov(Acl.T, -(Q + K.T @ R @ K))
        P = 0.5 * (P + P.T)
        K = Rinv @ B.T @ P
        if P_prev is not None and np.max(np.abs(P - P_prev)) <= tol * max(1.0, np.max(np.abs(P))):
            return P, K
        P_prev = P
    raise RiccatiDivergence("Newton iteration did not converge")


def lqr_gain(params: LqrParams | None = None, model=None) -> np.ndarray:
    """3 x 6 state-feedback gain for the relative-motion model."""
    params = params or LqrParams()
    mdl = L.resolve(model)
    A, B = cw_system(mdl.P[L.P_N], mdl.P[L.P_M])
    Q = np.diag([params.Q_pos] * 3 + [params.Q_vel] * 3)
    R = params.R * np.eye(3)
    _, K = solve_care(A, B, Q, R)
    return K


def sun_target_quaternion(theta_S: float) -> np.ndarray:
    """Attitude whose body +x axis points at the Sun direction for angle ``theta_S``."""
    return np.array([0.0, 0.0, math.sin(theta_S / 2), math.cos(theta_S / 2)])


def pd_attitude(state: SimState, params: PdParams | None = None, target_q=None, tau_max: float = 0.001) -> np.ndarray:
    """Torque ``-kp q_err_v - kd w`` clamped to the wheel limit.

    ``q_err = target^-1 (x) q`` with its scalar part made non-negative.
    """
    params = params or PdParams()
    if target_q is None:
        target_q = np.array(params.target, dtype=float) if not isinstance(params.target, str) else np.array([0, 0, 0, 1.0])
    qe = quat_mul(quat_conj(target_q), state.q)
    # at a half-turn error the scalar part is zero; the first nonzero vector entry decides
    lead = qe[3] if qe[3] != 0.0 else next((c for c in qe[:3] if c != 0.0), 0.0)
    if lead < 0:
        qe = -qe
    tau = -params.kp * qe[:3] - params.kd * state.w
    return np.clip(tau, -tau_max, tau_max)


class LqrPdPolicy:
    """LQR translation toward ``target_p`` plus PD attitude toward a fixed quaternion."""

    name = "lqr-pd"

    def __init__(self, cfg: RunConfig | None = None, model=None, theta_S0: float | None = None):
        self.model = L.resolve(model if model is not None else cfg)
        cfg = self.model.cfg
        self.lqr = cfg.controller.lqr
        self.pd = cfg.controller.pd
        self.K = lqr_gain(self.lqr, self.model)
        self.target_x = np.concatenate([self.lqr.target_p, self.lqr.target_v])
        self.theta_S0 = theta_S0
        self.target_q = None
        if not isinstance(self.pd.target, str):
            self.target_q = np.array(self.pd.target, dtype=float)
            self.target_q /= np.linalg.norm(self.target_q)

    def reset(self, state: SimState):
        if isinstance(self.pd.target, str):
            th = state.theta_S if self.theta_S0 is None else self.theta_S0
            self.target_q = sun_target_quaternion(th)

    def __call__(self, state: SimState, obs=None) -> np.ndarray:
        if self.target_q is None:
            self.reset(state)
        P = self.model.P
        err = np.concatenate([state.p, state.v]) - self.target_x
        f_hill = -self.K @ err
        f_body = quat_to_dcm(state.q).T @ f_hill
        F = np.clip(f_body, -P[L.P_FMAX], P[L.P_FMAX])
        tau = pd_attitude(state, self.pd, self.target_q, P[L.P_TAUMAX])
        return np.concatenate([F, tau])


class ZeroPolicy:
    name = "zero"

    def reset(self, state):
        pass

    def __call__(self, state, obs=None) -> np.ndarray:
        return np.zeros(6)


class RandomPolicy:
    """Uniform random controls inside the box, seeded."""

    name = "random"

    def __init__(self, seed: int = 0, model=None):
        self.model = L.resolve(model)
        self.rng = np.random.default_rng(seed)

    def reset(self, state):
        pass

    def __call__(self, state, obs=None) -> np.ndarray:
        P = self.model.P
        lim = np.array([P[L.P_FMAX]] * 3 + [P[L.P_TAUMAX]] * 3)
        return self.rng.uniform(-lim, lim)
